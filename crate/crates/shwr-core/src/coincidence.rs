//! Multi-device spatio-temporal coincidence detection.
//!
//! An air-shower front arrives at city scale essentially simultaneously,
//! so a candidate is a set of flash events linked pairwise by small time
//! gaps and small ground distance across at least two distinct devices.
//! Events are linked when both `|dt| <= window_s` and
//! `haversine <= radius_km`; candidates are the single-linkage connected
//! components with enough distinct devices. The time window (default 1 s)
//! absorbs phone clock-sync error rather than shower-front physics; the
//! radius (default 2 km) matches the km-scale footprint of an extensive
//! shower.
//!
//! The detector first splits the time-sorted stream into chains wherever
//! consecutive events are more than one window apart: no link can cross
//! such a gap, so chains cluster independently (and in parallel) with
//! results identical to all-pairs linkage over the whole input.

use crate::model::{haversine_km, is_positive_finite, FlashEvent, GeoPoint};
use crate::par;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("bad time range: end must be greater than start")]
    BadRange,
    #[error("bad parameters: window_s and radius_km must be > 0, min_devices >= 2")]
    BadParams,
}

/// Clustering parameters; construct with [`CoincidenceParams::new`] or use
/// the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceParams {
    window_s: f64,
    radius_km: f64,
    min_devices: usize,
}

impl Default for CoincidenceParams {
    fn default() -> Self {
        Self { window_s: 1.0, radius_km: 2.0, min_devices: 2 }
    }
}

impl CoincidenceParams {
    pub fn new(window_s: f64, radius_km: f64, min_devices: usize) -> Result<Self, CoincidenceError> {
        if !is_positive_finite(window_s) || !is_positive_finite(radius_km) || min_devices < 2 {
            return Err(CoincidenceError::BadParams);
        }
        Ok(Self { window_s, radius_km, min_devices })
    }

    pub fn window_s(&self) -> f64 {
        self.window_s
    }

    pub fn radius_km(&self) -> f64 {
        self.radius_km
    }

    pub fn min_devices(&self) -> usize {
        self.min_devices
    }

    fn window_ms(&self) -> f64 {
        self.window_s * 1000.0
    }
}

/// A cluster of near-simultaneous flashes from at least `min_devices`
/// distinct devices.
#[derive(Debug, Clone, PartialEq)]
pub struct ShowerCandidate {
    /// Earliest member time.
    pub t0_utc_ms: i64,
    /// Members in (time, device, magnitude) order.
    pub members: Vec<FlashEvent>,
    /// Count of distinct member devices.
    pub multiplicity: usize,
    /// Magnitude-weighted mean of the member positions.
    pub epicenter: GeoPoint,
    /// Last minus first member time, ms.
    pub span_ms: i64,
    /// Maximum pairwise member distance, km.
    pub span_km: f64,
}

impl ShowerCandidate {
    /// Assemble a candidate from members already in canonical order.
    fn from_members(members: Vec<FlashEvent>) -> Self {
        debug_assert!(!members.is_empty());
        let t0 = members.first().map(|e| e.t_utc_ms).unwrap_or(0);
        let t_last = members.last().map(|e| e.t_utc_ms).unwrap_or(t0);
        let devices: BTreeSet<&str> = members.iter().map(|e| e.device_id.as_str()).collect();
        let total_w: f64 = members.iter().map(|e| e.magnitude as f64).sum();
        let (mut lat, mut lon, mut alt) = (0.0, 0.0, 0.0);
        for e in &members {
            let w = e.magnitude as f64 / total_w;
            lat += w * e.geo.lat_deg;
            lon += w * e.geo.lon_deg;
            alt += w * e.geo.alt_m;
        }
        // Distinct positions only: devices are typically static, so the
        // pairwise span collapses to a handful of points.
        let mut positions: Vec<GeoPoint> = Vec::new();
        for e in &members {
            if !positions.iter().any(|p| {
                p.lat_deg.to_bits() == e.geo.lat_deg.to_bits()
                    && p.lon_deg.to_bits() == e.geo.lon_deg.to_bits()
            }) {
                positions.push(e.geo);
            }
        }
        let mut span_km = 0.0f64;
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                span_km = span_km.max(haversine_km(&positions[i], &positions[j]));
            }
        }
        Self {
            t0_utc_ms: t0,
            multiplicity: devices.len(),
            epicenter: GeoPoint { lat_deg: lat, lon_deg: lon, alt_m: alt },
            span_ms: t_last - t0,
            span_km,
            members,
        }
    }
}

/// Wire/JSON shape of a candidate (the `detect` CLI output and the
/// `/v1/candidates` endpoint).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateRecord {
    pub t0_utc_ms: i64,
    pub multiplicity: usize,
    pub span_ms: i64,
    pub span_km: f64,
    pub epicenter: EpicenterRecord,
    pub member_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpicenterRecord {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl From<&ShowerCandidate> for CandidateRecord {
    fn from(c: &ShowerCandidate) -> Self {
        Self {
            t0_utc_ms: c.t0_utc_ms,
            multiplicity: c.multiplicity,
            span_ms: c.span_ms,
            span_km: c.span_km,
            epicenter: EpicenterRecord {
                lat: c.epicenter.lat_deg,
                lon: c.epicenter.lon_deg,
                alt: c.epicenter.alt_m,
            },
            member_count: c.members.len(),
        }
    }
}

/// Detect shower candidates. Output is a function of the event multiset
/// only (input order is irrelevant) and is sorted by `t0_utc_ms`.
pub fn detect(events: &[FlashEvent], params: &CoincidenceParams) -> Vec<ShowerCandidate> {
    detect_impl(events, params, true)
}

/// Sequential twin of [`detect`]; identical output.
pub fn detect_seq(events: &[FlashEvent], params: &CoincidenceParams) -> Vec<ShowerCandidate> {
    detect_impl(events, params, false)
}

fn detect_impl(events: &[FlashEvent], params: &CoincidenceParams, parallel: bool) -> Vec<ShowerCandidate> {
    let mut sorted: Vec<FlashEvent> = events.to_vec();
    sorted.sort_by(|a, b| {
        (a.t_utc_ms, &a.device_id, a.magnitude).cmp(&(b.t_utc_ms, &b.device_id, b.magnitude))
    });
    // Split into independent chains at gaps wider than the window.
    let window_ms = params.window_ms();
    let mut chains: Vec<&[FlashEvent]> = Vec::new();
    let mut start = 0usize;
    for i in 1..sorted.len() {
        if (sorted[i].t_utc_ms - sorted[i - 1].t_utc_ms) as f64 > window_ms {
            chains.push(&sorted[start..i]);
            start = i;
        }
    }
    if start < sorted.len() {
        chains.push(&sorted[start..]);
    }
    let per_chain = par::map_collect(&chains, parallel, |chain| cluster_chain(chain, params));
    per_chain.into_iter().flatten().collect()
}

/// Single-linkage clustering of one chain: union events whose pairwise
/// time gap and distance are both within bounds, then keep components
/// with enough distinct devices, ordered by first member.
fn cluster_chain(chain: &[FlashEvent], params: &CoincidenceParams) -> Vec<ShowerCandidate> {
    let n = chain.len();
    if n < params.min_devices {
        return Vec::new();
    }
    let window_ms = params.window_ms();
    let mut dsu = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dt = (chain[j].t_utc_ms - chain[i].t_utc_ms) as f64;
            if dt > window_ms {
                break; // sorted by time: no later j can link to i
            }
            if haversine_km(&chain[i].geo, &chain[j].geo) <= params.radius_km {
                dsu.union(i, j);
            }
        }
    }
    let mut component_members: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut component_order: Vec<usize> = Vec::new();
    for i in 0..n {
        let root = dsu.find(i);
        if component_members[root].is_empty() {
            component_order.push(root);
        }
        component_members[root].push(i);
    }
    let mut out = Vec::new();
    for root in component_order {
        let idxs = &component_members[root];
        let devices: BTreeSet<&str> = idxs.iter().map(|&i| chain[i].device_id.as_str()).collect();
        if devices.len() < params.min_devices {
            continue;
        }
        let members: Vec<FlashEvent> = idxs.iter().map(|&i| chain[i].clone()).collect();
        out.push(ShowerCandidate::from_members(members));
    }
    out
}

/// Candidates per hour with `t0` inside `[t_start_ms, t_end_ms)`.
pub fn candidate_rate(
    candidates: &[ShowerCandidate],
    t_start_ms: i64,
    t_end_ms: i64,
) -> Result<f64, CoincidenceError> {
    if t_end_ms <= t_start_ms {
        return Err(CoincidenceError::BadRange);
    }
    let count =
        candidates.iter().filter(|c| c.t0_utc_ms >= t_start_ms && c.t0_utc_ms < t_end_ms).count();
    let hours = (t_end_ms - t_start_ms) as f64 / 3_600_000.0;
    Ok(count as f64 / hours)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Attach the larger root index under the smaller so that the
            // representative is stable regardless of union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

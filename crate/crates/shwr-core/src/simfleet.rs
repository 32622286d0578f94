//! Deterministic volunteer-fleet simulator and detector evaluation.
//!
//! Produces `SHWR1` protocol lines for a configurable fleet: Poisson
//! background with a diurnal modulation peaking at 15:00 local (the
//! afternoon temperature maximum), injected multi-device shower events,
//! per-device clock offsets (so ingest-side normalization is exercised),
//! and an optional two-tablet flight profile whose rate follows an
//! altitude model.
//!
//! # Determinism
//!
//! All randomness comes from [`crate::rng::SplitMix64`] with a
//! frozen draw order, so a given config and seed produce byte-identical
//! output on every run:
//!
//! 1. per device, in index order: latitude, longitude, clock offset, then
//!    one `u64` seeding the device's private background stream;
//! 2. per device stream: repeating (exponential gap, thinning uniform,
//!    and on acceptance the magnitude coin flips);
//! 3. per shower, in index order: latitude, longitude, time, then per
//!    affected device (in index order) a jitter draw and magnitude flips.
//!
//! Device streams are independent, which is what lets step 2 fan out over
//! rayon without changing a single byte of output.

use crate::codec::{encode_with_offset, Record};
use crate::coincidence::ShowerCandidate;
use crate::exposure::BBox;
use crate::model::{haversine_km, is_positive_finite, DeviceProfile, FlashEvent, GeoPoint};
use crate::par;
use crate::ratestats::AltitudeModel;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("bad simulation config: {0}")]
    BadConfig(&'static str),
}

/// Fleet simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_devices: usize,
    /// City area devices are scattered over.
    pub bbox: BBox,
    pub duration_h: f64,
    /// Mean per-device background rate at reference sensitivity, cpm.
    pub background_cpm: f64,
    /// Diurnal modulation as a fraction of the background, in [0, 1).
    pub diurnal_amplitude: f64,
    pub n_showers: usize,
    /// Devices within this distance of a shower epicenter register it, km.
    pub shower_footprint_km: f64,
    /// Uniform arrival-time jitter, ±ms.
    pub shower_jitter_ms: i64,
    /// Per-device clock offsets drawn uniformly in ±this range, ms.
    pub clock_offset_range_ms: i64,
    /// Simulation epoch; 0 starts at local midnight.
    pub t0_utc_ms: i64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_devices: 50,
            bbox: BBox::new(50.35, 50.55, 30.35, 30.70).expect("static bbox"),
            duration_h: 24.0,
            background_cpm: 5.0,
            diurnal_amplitude: 0.3,
            n_showers: 20,
            shower_footprint_km: 1.0,
            shower_jitter_ms: 200,
            clock_offset_range_ms: 5000,
            t0_utc_ms: 0,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !is_positive_finite(self.duration_h) {
            return Err(SimError::BadConfig("duration_h must be positive"));
        }
        if !is_positive_finite(self.background_cpm) {
            return Err(SimError::BadConfig("background_cpm must be positive"));
        }
        if !(0.0..1.0).contains(&self.diurnal_amplitude) {
            return Err(SimError::BadConfig("diurnal_amplitude must be in [0, 1)"));
        }
        if !is_positive_finite(self.shower_footprint_km) {
            return Err(SimError::BadConfig("shower_footprint_km must be positive"));
        }
        if self.shower_jitter_ms < 0 || self.clock_offset_range_ms < 0 {
            return Err(SimError::BadConfig("jitter and offset ranges must be non-negative"));
        }
        Ok(())
    }

    fn duration_ms(&self) -> i64 {
        (self.duration_h * 3_600_000.0) as i64
    }
}

/// One injected shower as recorded in the ground truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthShower {
    pub t_true_ms: i64,
    pub lat: f64,
    pub lon: f64,
    /// Ids of the devices inside the footprint.
    pub devices: Vec<String>,
}

impl TruthShower {
    pub fn epicenter(&self) -> GeoPoint {
        GeoPoint { lat_deg: self.lat, lon_deg: self.lon, alt_m: 0.0 }
    }
}

/// Ground truth for an entire simulation run; serializes to the sidecar
/// JSON `{"showers": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub showers: Vec<TruthShower>,
}

/// Detector score against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub precision: f64,
    pub recall: f64,
    /// Greedy 1-to-1 matches as (candidate index, truth index).
    pub matches: Vec<(usize, usize)>,
}

struct SimDevice {
    profile: DeviceProfile,
    pos: GeoPoint,
    offset_ms: i64,
    stream_seed: u64,
}

/// Round a coordinate onto the canonical 6-decimal wire grid.
fn quantize6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn draw_magnitude(rng: &mut SplitMix64) -> u32 {
    // 1 + Geometric(p = 1/2) via coin flips, capped defensively.
    let mut m = 1u32;
    while m < 64 && rng.next_f64() < 0.5 {
        m += 1;
    }
    m
}

/// Diurnal background rate in events/second at absolute time `t_abs_ms`,
/// peaking at 15:00 local time.
fn diurnal_rate_cps(background_cpm: f64, amplitude: f64, t_abs_ms: i64) -> f64 {
    let hour = (t_abs_ms.rem_euclid(86_400_000)) as f64 / 3_600_000.0;
    let phase = 2.0 * std::f64::consts::PI * (hour - 15.0) / 24.0;
    background_cpm / 60.0 * (1.0 + amplitude * phase.cos())
}

/// Thinned inhomogeneous Poisson stream over `[0, dur_s)`, returning
/// `(t_utc_ms, magnitude)` pairs. `rate_cps(t_abs_ms)` must never exceed
/// `lambda_max_cps`.
fn poisson_stream(
    rng: &mut SplitMix64,
    t0_utc_ms: i64,
    dur_s: f64,
    lambda_max_cps: f64,
    rate_cps: impl Fn(i64) -> f64,
) -> Vec<(i64, u32)> {
    let mut events = Vec::new();
    let mut t_s = 0.0f64;
    loop {
        let u = rng.next_f64();
        t_s += -(1.0 - u).ln() / lambda_max_cps;
        if t_s >= dur_s {
            break;
        }
        let t_abs = t0_utc_ms + (t_s * 1000.0) as i64;
        let v = rng.next_f64();
        let accept = v * lambda_max_cps < rate_cps(t_abs);
        if accept {
            let magnitude = draw_magnitude(rng);
            events.push((t_abs, magnitude));
        }
    }
    events
}

/// Run the fleet simulation. Returns the protocol lines (DEV headers then
/// time-sorted EV lines, device-local clocks with offsets) and the ground
/// truth of injected showers.
pub fn simulate(config: &SimConfig) -> Result<(String, GroundTruth), SimError> {
    simulate_impl(config, true)
}

/// Sequential twin of [`simulate`]; byte-identical output.
pub fn simulate_seq(config: &SimConfig) -> Result<(String, GroundTruth), SimError> {
    simulate_impl(config, false)
}

fn simulate_impl(config: &SimConfig, parallel: bool) -> Result<(String, GroundTruth), SimError> {
    config.validate()?;
    let mut master = SplitMix64::new(config.seed);
    let bbox = config.bbox;

    // Draw order step 1: device placement, clock offset, stream seed.
    let devices: Vec<SimDevice> = (0..config.n_devices)
        .map(|i| {
            let lat = quantize6(master.uniform_f64(bbox.lat_min, bbox.lat_max));
            let lon = quantize6(master.uniform_f64(bbox.lon_min, bbox.lon_max));
            let offset_ms = if config.clock_offset_range_ms == 0 {
                0
            } else {
                master.uniform_i64(-config.clock_offset_range_ms, config.clock_offset_range_ms)
            };
            let stream_seed = master.next_u64();
            SimDevice {
                profile: DeviceProfile::new(&format!("d{i:03}"), "SIM", 80, 1.0)
                    .expect("static profile"),
                pos: GeoPoint { lat_deg: lat, lon_deg: lon, alt_m: 0.0 },
                offset_ms,
                stream_seed,
            }
        })
        .collect();

    // Draw order step 2: background events from per-device streams.
    let dur_s = config.duration_h * 3600.0;
    let lambda_max = config.background_cpm * (1.0 + config.diurnal_amplitude) / 60.0;
    let per_device: Vec<Vec<(i64, u32)>> = par::map_collect(&devices, parallel, |dev| {
        let mut rng = SplitMix64::new(dev.stream_seed);
        poisson_stream(&mut rng, config.t0_utc_ms, dur_s, lambda_max, |t_abs| {
            diurnal_rate_cps(config.background_cpm, config.diurnal_amplitude, t_abs)
        })
    });

    // (device index, t_utc, magnitude) triples for every event.
    let mut events: Vec<(usize, i64, u32)> = Vec::new();
    for (idx, stream) in per_device.into_iter().enumerate() {
        events.extend(stream.into_iter().map(|(t, m)| (idx, t, m)));
    }

    // Draw order step 3: injected showers.
    let dur_ms = config.duration_ms();
    let mut truth = Vec::with_capacity(config.n_showers);
    for _ in 0..config.n_showers {
        let lat = quantize6(master.uniform_f64(bbox.lat_min, bbox.lat_max));
        let lon = quantize6(master.uniform_f64(bbox.lon_min, bbox.lon_max));
        let t_true = config.t0_utc_ms + master.uniform_i64(0, dur_ms - 1);
        let epicenter = GeoPoint { lat_deg: lat, lon_deg: lon, alt_m: 0.0 };
        let mut affected = Vec::new();
        for (idx, dev) in devices.iter().enumerate() {
            if haversine_km(&dev.pos, &epicenter) <= config.shower_footprint_km {
                affected.push(idx);
            }
        }
        for &idx in &affected {
            let jitter = if config.shower_jitter_ms == 0 {
                0
            } else {
                master.uniform_i64(-config.shower_jitter_ms, config.shower_jitter_ms)
            };
            let magnitude = draw_magnitude(&mut master);
            events.push((idx, t_true + jitter, magnitude));
        }
        truth.push(TruthShower {
            t_true_ms: t_true,
            lat,
            lon,
            devices: affected.iter().map(|&i| devices[i].profile.device_id.clone()).collect(),
        });
    }

    // Emit: DEV headers in device order, EV lines sorted by (t, device,
    // magnitude). Device ids are zero-padded so string order is index order.
    events.sort_by_key(|&(idx, t, m)| (t, idx, m));
    let mut out = String::new();
    for dev in &devices {
        out.push_str(&encode_with_offset(&Record::Device(dev.profile.clone()), 0));
    }
    for (idx, t_utc, magnitude) in events {
        let dev = &devices[idx];
        let flash = FlashEvent {
            device_id: dev.profile.device_id.clone(),
            t_utc_ms: t_utc,
            geo: dev.pos,
            magnitude,
        };
        out.push_str(&encode_with_offset(&Record::Flash(flash), dev.offset_ms));
    }
    Ok((out, GroundTruth { showers: truth }))
}

/// Sensitivities of the two co-located flight tablets.
pub const FLIGHT_SENSITIVITIES: [f64; 2] = [1.0, 2.0];

/// Simulate two co-located tablets on a flight whose altitude ramps
/// 0 → `ascent_to_km` → 0 over the configured duration (linear ascent for
/// the first quarter, cruise for half, linear descent for the last
/// quarter). Per-device rate is `model.rate_cpm(h) * sensitivity`; EV
/// lines carry the altitude at event time.
pub fn flight_profile(
    config: &SimConfig,
    ascent_to_km: f64,
    model: &AltitudeModel,
) -> Result<String, SimError> {
    flight_impl(config, ascent_to_km, model, true)
}

/// Sequential twin of [`flight_profile`]; byte-identical output.
pub fn flight_profile_seq(
    config: &SimConfig,
    ascent_to_km: f64,
    model: &AltitudeModel,
) -> Result<String, SimError> {
    flight_impl(config, ascent_to_km, model, false)
}

/// Altitude in km at `t_s` seconds into a flight of `dur_s` seconds.
pub fn flight_altitude_km(t_s: f64, dur_s: f64, peak_km: f64) -> f64 {
    let ramp = dur_s / 4.0;
    if t_s < ramp {
        peak_km * (t_s / ramp)
    } else if t_s < 3.0 * ramp {
        peak_km
    } else {
        (peak_km * ((dur_s - t_s) / ramp)).max(0.0)
    }
}

fn flight_impl(
    config: &SimConfig,
    ascent_to_km: f64,
    model: &AltitudeModel,
    parallel: bool,
) -> Result<String, SimError> {
    config.validate()?;
    if !is_positive_finite(ascent_to_km) {
        return Err(SimError::BadConfig("ascent_to_km must be positive"));
    }
    let bbox = config.bbox;
    let pos = GeoPoint {
        lat_deg: quantize6((bbox.lat_min + bbox.lat_max) / 2.0),
        lon_deg: quantize6((bbox.lon_min + bbox.lon_max) / 2.0),
        alt_m: 0.0,
    };
    let mut master = SplitMix64::new(config.seed);
    let ids = ["flight-a", "flight-b"];
    let seeds: Vec<(usize, u64)> = (0..2).map(|i| (i, master.next_u64())).collect();
    let dur_s = config.duration_h * 3600.0;
    let per_device: Vec<Vec<(i64, u32)>> = par::map_collect(&seeds, parallel, |&(i, seed)| {
        let sens = FLIGHT_SENSITIVITIES[i];
        let lambda_max = model.rate_cpm(ascent_to_km) * sens / 60.0;
        let mut rng = SplitMix64::new(seed);
        poisson_stream(&mut rng, config.t0_utc_ms, dur_s, lambda_max, |t_abs| {
            let t_s = (t_abs - config.t0_utc_ms) as f64 / 1000.0;
            model.rate_cpm(flight_altitude_km(t_s, dur_s, ascent_to_km)) * sens / 60.0
        })
    });

    let mut events: Vec<(usize, i64, u32)> = Vec::new();
    for (idx, stream) in per_device.into_iter().enumerate() {
        events.extend(stream.into_iter().map(|(t, m)| (idx, t, m)));
    }
    events.sort_by_key(|&(idx, t, m)| (t, idx, m));

    let mut out = String::new();
    for (i, id) in ids.iter().enumerate() {
        let profile =
            DeviceProfile::new(id, "TABLET", 50, FLIGHT_SENSITIVITIES[i]).expect("static profile");
        out.push_str(&encode_with_offset(&Record::Device(profile), 0));
    }
    for (idx, t_utc, magnitude) in events {
        let t_s = (t_utc - config.t0_utc_ms) as f64 / 1000.0;
        let alt_m = flight_altitude_km(t_s, dur_s, ascent_to_km) * 1000.0;
        let flash = FlashEvent {
            device_id: ids[idx].to_string(),
            t_utc_ms: t_utc,
            geo: GeoPoint { alt_m, ..pos },
            magnitude,
        };
        out.push_str(&encode_with_offset(&Record::Flash(flash), 0));
    }
    Ok(out)
}

/// Score candidates against ground truth by greedy 1-to-1 matching in
/// candidate time order: a candidate takes the closest-in-time unmatched
/// shower within `match_window_s` and `match_radius_km`. Precision over an
/// empty candidate list (and recall over empty truth) is 1.0.
pub fn evaluate(
    candidates: &[ShowerCandidate],
    truth: &GroundTruth,
    match_window_s: f64,
    match_radius_km: f64,
) -> Evaluation {
    let window_ms = match_window_s * 1000.0;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].t0_utc_ms);
    let mut taken = vec![false; truth.showers.len()];
    let mut matches = Vec::new();
    for &ci in &order {
        let cand = &candidates[ci];
        let mut best: Option<(i64, usize)> = None;
        for (ti, shower) in truth.showers.iter().enumerate() {
            if taken[ti] {
                continue;
            }
            let dt = (cand.t0_utc_ms - shower.t_true_ms).abs();
            if dt as f64 > window_ms {
                continue;
            }
            if haversine_km(&cand.epicenter, &shower.epicenter()) > match_radius_km {
                continue;
            }
            if best.is_none_or(|(bdt, _)| dt < bdt) {
                best = Some((dt, ti));
            }
        }
        if let Some((_, ti)) = best {
            taken[ti] = true;
            matches.push((ci, ti));
        }
    }
    let matched = matches.len() as f64;
    let precision =
        if candidates.is_empty() { 1.0 } else { matched / candidates.len() as f64 };
    let recall = if truth.showers.is_empty() { 1.0 } else { matched / truth.showers.len() as f64 };
    Evaluation { precision, recall, matches }
}

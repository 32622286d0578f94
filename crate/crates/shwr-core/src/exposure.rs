//! Personal exposure dose along a GPS track and spatial grid aggregation.
//!
//! Dose is the zero-order-hold time integral of concentration: a logger
//! reading holds until the next sample, and a gap longer than `max_gap_s`
//! contributes only `max_gap_s` so a dropped signal cannot dominate the
//! total. Grids use equirectangular cells sized in kilometers with a
//! `cos(lat_mid)` longitude correction, adequate at city scale.

use crate::model::{is_positive_finite, GeoPoint, TrackSample};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use thiserror::Error;

/// Kilometers per degree of latitude (and of longitude at the equator).
pub const KM_PER_DEG: f64 = 111.1949;
/// Default dose integration gap clamp, seconds.
pub const DEFAULT_MAX_GAP_S: f64 = 300.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExposureError {
    #[error("track timestamps must be strictly increasing (violated at sample {index})")]
    UnorderedTrack { index: usize },
    #[error("bad bounding box or cell size: {0}")]
    BadBBox(&'static str),
    #[error("grids must share bbox, cell size and kind to merge")]
    MergeMismatch,
}

/// Geographic bounding box; `lat_min < lat_max`, `lon_min < lon_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, ExposureError> {
        let vals = [lat_min, lat_max, lon_min, lon_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ExposureError::BadBBox("coordinates must be finite"));
        }
        if lat_min >= lat_max || lon_min >= lon_max {
            return Err(ExposureError::BadBBox("min must be below max"));
        }
        if !(-90.0..=90.0).contains(&lat_min)
            || !(-90.0..=90.0).contains(&lat_max)
            || !(-180.0..=180.0).contains(&lon_min)
            || !(-180.0..=180.0).contains(&lon_max)
        {
            return Err(ExposureError::BadBBox("coordinates out of range"));
        }
        Ok(Self { lat_min, lat_max, lon_min, lon_max })
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        // Left-closed on both axes, consistent with cell assignment.
        p.lat_deg >= self.lat_min
            && p.lat_deg < self.lat_max
            && p.lon_deg >= self.lon_min
            && p.lon_deg < self.lon_max
    }
}

/// What a grid's cell values measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    CoPpm,
    ShowerCount,
}

impl GridKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridKind::CoPpm => "co_ppm",
            GridKind::ShowerCount => "shower_count",
        }
    }
}

/// Per-cell aggregate. The running sum is kept so that merges stay exact
/// up to floating-point associativity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub count: u64,
    sum: f64,
    pub max: f64,
}

impl CellStats {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// A sparse spatial aggregation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub bbox: BBox,
    pub cell_km: f64,
    pub kind: GridKind,
    /// Cells keyed by (lat index, lon index); only nonempty cells stored.
    cells: BTreeMap<(u64, u64), CellStats>,
    /// Count of samples outside the bbox.
    pub dropped: u64,
    dlat: f64,
    dlon: f64,
}

impl GridMap {
    pub fn cells(&self) -> &BTreeMap<(u64, u64), CellStats> {
        &self.cells
    }

    /// Cell indices for a point inside the bbox.
    fn cell_of(&self, p: &GeoPoint) -> (u64, u64) {
        let i = ((p.lat_deg - self.bbox.lat_min) / self.dlat).floor() as u64;
        let j = ((p.lon_deg - self.bbox.lon_min) / self.dlon).floor() as u64;
        (i, j)
    }

    /// Geographic corners of a cell: (lat0, lat1, lon0, lon1).
    pub fn cell_bounds(&self, i: u64, j: u64) -> (f64, f64, f64, f64) {
        let lat0 = self.bbox.lat_min + i as f64 * self.dlat;
        let lon0 = self.bbox.lon_min + j as f64 * self.dlon;
        (lat0, lat0 + self.dlat, lon0, lon0 + self.dlon)
    }

    /// Merge two compatible grids: counts add, means combine
    /// count-weighted, max takes the max.
    pub fn merge(mut self, other: GridMap) -> Result<GridMap, ExposureError> {
        if self.bbox != other.bbox || self.cell_km != other.cell_km || self.kind != other.kind {
            return Err(ExposureError::MergeMismatch);
        }
        for (key, cell) in other.cells {
            self.cells
                .entry(key)
                .and_modify(|c| {
                    c.count += cell.count;
                    c.sum += cell.sum;
                    c.max = c.max.max(cell.max);
                })
                .or_insert(cell);
        }
        self.dropped += other.dropped;
        Ok(self)
    }

    /// GeoJSON FeatureCollection with one Polygon per nonempty cell and
    /// properties `{count, mean, max, kind}`.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .cells
            .iter()
            .map(|(&(i, j), cell)| {
                let (lat0, lat1, lon0, lon1) = self.cell_bounds(i, j);
                json!({
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[
                            [lon0, lat0], [lon1, lat0], [lon1, lat1], [lon0, lat1], [lon0, lat0]
                        ]],
                    },
                    "properties": {
                        "count": cell.count,
                        "mean": cell.mean(),
                        "max": cell.max,
                        "kind": self.kind.as_str(),
                    },
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}

/// Smallest bbox covering the points, padded by one cell and clamped to
/// valid coordinates, so every point lands strictly inside. `None` for an
/// empty point set.
pub fn bbox_for_points(points: &[GeoPoint], cell_km: f64) -> Option<BBox> {
    let first = points.first()?;
    let (mut lat_min, mut lat_max) = (first.lat_deg, first.lat_deg);
    let (mut lon_min, mut lon_max) = (first.lon_deg, first.lon_deg);
    for p in points {
        lat_min = lat_min.min(p.lat_deg);
        lat_max = lat_max.max(p.lat_deg);
        lon_min = lon_min.min(p.lon_deg);
        lon_max = lon_max.max(p.lon_deg);
    }
    let pad = (cell_km / KM_PER_DEG).max(1e-4);
    BBox::new(
        (lat_min - pad).max(-90.0),
        (lat_max + pad).min(90.0),
        (lon_min - pad).max(-180.0),
        (lon_max + pad).min(180.0),
    )
    .ok()
}

/// Integrate exposure dose (ppm·s) along a strictly time-ordered track.
/// Each sample's concentration holds until the next sample, with the gap
/// clamped to `max_gap_s`; the final sample contributes nothing.
pub fn accumulate_dose(track: &[TrackSample], max_gap_s: f64) -> Result<f64, ExposureError> {
    for (i, pair) in track.windows(2).enumerate() {
        if pair[1].t_utc_ms <= pair[0].t_utc_ms {
            return Err(ExposureError::UnorderedTrack { index: i + 1 });
        }
    }
    let mut dose = 0.0;
    for pair in track.windows(2) {
        let dt_s = (pair[1].t_utc_ms - pair[0].t_utc_ms) as f64 / 1000.0;
        dose += pair[0].co_ppm * dt_s.min(max_gap_s);
    }
    Ok(dose)
}

/// Aggregate `(position, value)` samples into a grid. Samples outside the
/// bbox are dropped and counted; assignment is left-closed so a sample on
/// the min corner lands in cell (0,0).
pub fn build_grid(
    samples: &[(GeoPoint, f64)],
    bbox: BBox,
    cell_km: f64,
    kind: GridKind,
) -> Result<GridMap, ExposureError> {
    if !is_positive_finite(cell_km) {
        return Err(ExposureError::BadBBox("cell_km must be positive"));
    }
    let lat_mid = (bbox.lat_min + bbox.lat_max) / 2.0;
    let dlat = cell_km / KM_PER_DEG;
    let dlon = cell_km / (KM_PER_DEG * lat_mid.to_radians().cos());
    let mut grid = GridMap { bbox, cell_km, kind, cells: BTreeMap::new(), dropped: 0, dlat, dlon };
    for (p, value) in samples {
        if !bbox.contains(p) {
            grid.dropped += 1;
            continue;
        }
        let key = grid.cell_of(p);
        grid.cells
            .entry(key)
            .and_modify(|c| {
                c.count += 1;
                c.sum += value;
                c.max = c.max.max(*value);
            })
            .or_insert(CellStats { count: 1, sum: *value, max: *value });
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(t_s: i64, ppm: f64) -> TrackSample {
        TrackSample::new("d1", t_s * 1000, GeoPoint::new(50.45, 30.52, 0.0).unwrap(), ppm).unwrap()
    }

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon, 0.0).unwrap()
    }

    fn kyiv_bbox() -> BBox {
        BBox::new(50.35, 50.55, 30.35, 30.70).unwrap()
    }

    #[test]
    fn single_segment_dose() {
        let dose = accumulate_dose(&[sample(0, 10.0), sample(3600, 99.0)], 3600.0).unwrap();
        assert_relative_eq!(dose, 36_000.0, max_relative = 1e-12);
    }

    #[test]
    fn piecewise_constant_sum() {
        let track = [sample(0, 10.0), sample(1800, 20.0), sample(3600, 0.0)];
        let dose = accumulate_dose(&track, 3600.0).unwrap();
        assert_relative_eq!(dose, 54_000.0, max_relative = 1e-12);
    }

    #[test]
    fn gap_clamp_limits_contribution() {
        let dose = accumulate_dose(&[sample(0, 10.0), sample(1000, 5.0)], 300.0).unwrap();
        assert_relative_eq!(dose, 10.0 * 300.0, max_relative = 1e-12);
    }

    #[test]
    fn final_sample_contributes_nothing() {
        assert_eq!(accumulate_dose(&[sample(0, 42.0)], 300.0).unwrap(), 0.0);
        assert_eq!(accumulate_dose(&[], 300.0).unwrap(), 0.0);
    }

    #[test]
    fn unordered_track_rejected() {
        let err = accumulate_dose(&[sample(10, 1.0), sample(10, 2.0)], 300.0).unwrap_err();
        assert_eq!(err, ExposureError::UnorderedTrack { index: 1 });
    }

    #[test]
    fn dose_additive_over_concatenation() {
        let a = [sample(0, 10.0), sample(100, 20.0)];
        let b = [sample(100, 20.0), sample(200, 5.0), sample(260, 0.0)];
        let whole = [a[0].clone(), b[0].clone(), b[1].clone(), b[2].clone()];
        let dose_parts = accumulate_dose(&a, 300.0).unwrap() + accumulate_dose(&b, 300.0).unwrap();
        let dose_whole = accumulate_dose(&whole, 300.0).unwrap();
        assert_relative_eq!(dose_parts, dose_whole, max_relative = 1e-12);
    }

    #[test]
    fn redundant_sample_on_constant_segment_is_invisible() {
        let orig = [sample(0, 7.5), sample(200, 3.0)];
        let with_mid = [sample(0, 7.5), sample(120, 7.5), sample(200, 3.0)];
        assert_relative_eq!(
            accumulate_dose(&orig, 300.0).unwrap(),
            accumulate_dose(&with_mid, 300.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn same_cell_aggregates_mean_max_count() {
        let samples = [(p(50.451, 30.521), 10.0), (p(50.4512, 30.5212), 20.0)];
        let grid = build_grid(&samples, kyiv_bbox(), 1.0, GridKind::CoPpm).unwrap();
        assert_eq!(grid.cells().len(), 1);
        let cell = grid.cells().values().next().unwrap();
        assert_eq!(cell.count, 2);
        assert_relative_eq!(cell.mean(), 15.0, max_relative = 1e-12);
        assert_eq!(cell.max, 20.0);
        assert_eq!(grid.dropped, 0);
    }

    #[test]
    fn outside_bbox_dropped_and_counted() {
        let samples = [(p(51.0, 30.5), 1.0), (p(50.45, 30.52), 2.0)];
        let grid = build_grid(&samples, kyiv_bbox(), 1.0, GridKind::CoPpm).unwrap();
        assert_eq!(grid.dropped, 1);
        let total: u64 = grid.cells().values().map(|c| c.count).sum();
        assert_eq!(total + grid.dropped, 2);
    }

    #[test]
    fn min_corner_lands_in_cell_zero() {
        let grid =
            build_grid(&[(p(50.35, 30.35), 5.0)], kyiv_bbox(), 1.0, GridKind::CoPpm).unwrap();
        assert_eq!(grid.cells().keys().next(), Some(&(0, 0)));
    }

    #[test]
    fn max_edge_is_outside() {
        let grid =
            build_grid(&[(p(50.55, 30.5), 5.0)], kyiv_bbox(), 1.0, GridKind::CoPpm).unwrap();
        assert_eq!(grid.dropped, 1);
        assert!(grid.cells().is_empty());
    }

    #[test]
    fn cell_mean_within_value_range() {
        let samples: Vec<(GeoPoint, f64)> =
            (0..50).map(|i| (p(50.45 + (i % 7) as f64 * 1e-4, 30.52), i as f64)).collect();
        let grid = build_grid(&samples, kyiv_bbox(), 0.5, GridKind::CoPpm).unwrap();
        for cell in grid.cells().values() {
            assert!(cell.mean() <= cell.max);
        }
    }

    #[test]
    fn bbox_validation() {
        assert!(BBox::new(50.0, 50.0, 30.0, 31.0).is_err());
        assert!(BBox::new(50.0, 51.0, 31.0, 30.0).is_err());
        assert!(BBox::new(-91.0, 0.0, 0.0, 1.0).is_err());
        assert!(build_grid(&[], kyiv_bbox(), 0.0, GridKind::CoPpm).is_err());
    }

    #[test]
    fn merge_combines_weighted_means() {
        let bbox = kyiv_bbox();
        let a = build_grid(&[(p(50.45, 30.52), 10.0)], bbox, 1.0, GridKind::CoPpm).unwrap();
        let b = build_grid(
            &[(p(50.4501, 30.5201), 20.0), (p(50.4501, 30.5202), 30.0)],
            bbox,
            1.0,
            GridKind::CoPpm,
        )
        .unwrap();
        let merged = a.merge(b).unwrap();
        let cell = merged.cells().values().next().unwrap();
        assert_eq!(cell.count, 3);
        assert_relative_eq!(cell.mean(), 20.0, max_relative = 1e-12);
        assert_eq!(cell.max, 30.0);
    }

    #[test]
    fn bbox_for_points_covers_all_points() {
        assert!(bbox_for_points(&[], 1.0).is_none());
        let points = [p(50.45, 30.52), p(50.47, 30.61), p(50.42, 30.48)];
        let bbox = bbox_for_points(&points, 1.0).unwrap();
        for pt in &points {
            assert!(bbox.contains(pt));
        }
        // A single point still yields a valid (padded) box.
        let one = bbox_for_points(&points[..1], 0.5).unwrap();
        assert!(one.contains(&points[0]));
        // Padding clamps at the coordinate limits.
        let polar = bbox_for_points(&[p(89.9999, 179.9999)], 100.0).unwrap();
        assert!(polar.lat_max <= 90.0 && polar.lon_max <= 180.0);
    }

    #[test]
    fn merge_rejects_mismatched_grids() {
        let a = build_grid(&[], kyiv_bbox(), 1.0, GridKind::CoPpm).unwrap();
        let b = build_grid(&[], kyiv_bbox(), 2.0, GridKind::CoPpm).unwrap();
        assert_eq!(a.clone().merge(b).unwrap_err(), ExposureError::MergeMismatch);
        let c = build_grid(&[], kyiv_bbox(), 1.0, GridKind::ShowerCount).unwrap();
        assert_eq!(a.merge(c).unwrap_err(), ExposureError::MergeMismatch);
    }

    #[test]
    fn geojson_shape() {
        let grid = build_grid(
            &[(p(50.45, 30.52), 10.0), (p(50.47, 30.60), 5.0)],
            kyiv_bbox(),
            1.0,
            GridKind::CoPpm,
        )
        .unwrap();
        let geo = grid.to_geojson();
        assert_eq!(geo["type"], "FeatureCollection");
        let features = geo["features"].as_array().unwrap();
        assert_eq!(features.len(), 2);
        for f in features {
            assert_eq!(f["geometry"]["type"], "Polygon");
            let ring = f["geometry"]["coordinates"][0].as_array().unwrap();
            assert_eq!(ring.len(), 5);
            assert_eq!(ring[0], ring[4]);
            assert_eq!(f["properties"]["kind"], "co_ppm");
            assert!(f["properties"]["count"].as_u64().unwrap() >= 1);
        }
    }
}

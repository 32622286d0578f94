//! HTTP endpoints over an [`EventStore`].
//!
//! ```text
//! POST /v1/ingest                          protocol lines -> JSON report
//! GET  /v1/healthz
//! GET  /v1/devices
//! GET  /v1/series?device=ID&bin_s=60&from_ms=&to_ms=      CSV
//! GET  /v1/candidates?window_s=&radius_km=&min_devices=&from_ms=&to_ms=
//! GET  /v1/map/showers?cell_km=1.0         GeoJSON
//! GET  /v1/map/pollution?cell_km=0.5       GeoJSON
//! ```
//!
//! Unknown endpoints return 404 and bad parameters 400, both with a
//! `{"error": code, "detail": text}` body.

use crate::store::{EventStore, StoreError};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::json;
use shwr_core::coincidence::{self, CandidateRecord, CoincidenceParams};
use shwr_core::exposure::{bbox_for_points, build_grid, BBox, GridKind};
use shwr_core::model::GeoPoint;
use shwr_core::ratestats;
use std::collections::HashMap;
use std::sync::Arc;

struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_parameter(detail: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_parameter", detail: detail.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.code, "detail": self.detail });
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "storage_failure",
            detail: err.to_string(),
        }
    }
}

type Params = HashMap<String, String>;

fn param_f64(params: &Params, name: &str, default: f64) -> Result<f64, ApiError> {
    match params.get(name) {
        None => Ok(default),
        Some(raw) => {
            raw.parse::<f64>().map_err(|_| ApiError::bad_parameter(format!("{name}: not a number")))
        }
    }
}

fn param_i64_opt(params: &Params, name: &str) -> Result<Option<i64>, ApiError> {
    match params.get(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<i64>()
            .map(Some)
            .map_err(|_| ApiError::bad_parameter(format!("{name}: not an integer"))),
    }
}

fn param_usize(params: &Params, name: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(name) {
        None => Ok(default),
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| ApiError::bad_parameter(format!("{name}: not a non-negative integer"))),
    }
}

fn time_range(params: &Params) -> Result<(Option<i64>, Option<i64>), ApiError> {
    let from = param_i64_opt(params, "from_ms")?;
    let to = param_i64_opt(params, "to_ms")?;
    if let (Some(f), Some(t)) = (from, to) {
        if t <= f {
            return Err(ApiError::bad_parameter("to_ms must be greater than from_ms"));
        }
    }
    Ok((from, to))
}

/// Build the service router over a shared store.
pub fn router(store: Arc<EventStore>) -> Router {
    Router::new()
        .route("/v1/ingest", post(ingest))
        .route("/v1/healthz", get(healthz))
        .route("/v1/devices", get(devices))
        .route("/v1/series", get(series))
        .route("/v1/candidates", get(candidates))
        .route("/v1/map/showers", get(map_showers))
        .route("/v1/map/pollution", get(map_pollution))
        .fallback(unknown_endpoint)
        .with_state(store)
}

/// Serve until the listener fails or the task is dropped.
pub async fn serve(store: Arc<EventStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}

async fn unknown_endpoint(uri: Uri) -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "unknown_endpoint",
        detail: format!("no such endpoint: {}", uri.path()),
    }
}

async fn ingest(State(store): State<Arc<EventStore>>, body: String) -> Result<Response, ApiError> {
    let report = store.ingest_lines(&body)?;
    let rejected: Vec<_> = report
        .rejected
        .iter()
        .map(|(line_no, err)| {
            json!({ "line": line_no, "error": err.code(), "detail": err.to_string() })
        })
        .collect();
    Ok(axum::Json(json!({ "accepted": report.accepted, "rejected": rejected })).into_response())
}

async fn healthz(State(store): State<Arc<EventStore>>) -> Response {
    let (devices, events) = store.counts();
    axum::Json(json!({ "status": "ok", "devices": devices, "events": events })).into_response()
}

async fn devices(State(store): State<Arc<EventStore>>) -> Response {
    axum::Json(store.devices()).into_response()
}

async fn series(
    State(store): State<Arc<EventStore>>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let device = params
        .get("device")
        .ok_or_else(|| ApiError::bad_parameter("device: required"))?
        .clone();
    let bin_s = param_usize(&params, "bin_s", 60)?;
    if bin_s == 0 {
        return Err(ApiError::bad_parameter("bin_s: must be >= 1"));
    }
    let (from, to) = time_range(&params)?;
    let events = store
        .device_events(&device)
        .ok_or_else(|| ApiError::bad_parameter(format!("device: unknown device {device:?}")))?;
    let extent = store.device_time_extent(&device);
    let (t_start, t_end) = match (from, to, extent) {
        (Some(f), Some(t), _) => (f, t),
        (Some(f), None, Some((_, hi))) => (f, hi + 1),
        (None, Some(t), Some((lo, _))) => (lo, t),
        (None, None, Some((lo, hi))) => (lo, hi + 1),
        // No events and no explicit range: one empty bin from zero.
        _ => (from.unwrap_or(0), to.unwrap_or(from.unwrap_or(0) + bin_s as i64 * 1000)),
    };
    if t_end <= t_start {
        return Err(ApiError::bad_parameter("to_ms must be greater than from_ms"));
    }
    let series = ratestats::bin_events(&events, &device, bin_s as u32, t_start, t_end)
        .map_err(|e| ApiError::bad_parameter(e.to_string()))?;
    let window = baseline_window_bins(bin_s as u32, series.len());
    let series = series
        .fit_baseline(window)
        .and_then(|s| {
            s.flag_spikes(ratestats::DEFAULT_SPIKE_K, ratestats::DEFAULT_MAD_FLOOR_CPM)
        })
        .map_err(|e| ApiError::bad_parameter(e.to_string()))?;
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/csv")],
        series_csv(&series),
    )
        .into_response())
}

/// Default baseline window: 6 h of bins, forced odd and clamped to the
/// series length (also forced odd) so short series stay valid.
fn baseline_window_bins(bin_s: u32, series_len: usize) -> usize {
    let mut w = (ratestats::DEFAULT_BASELINE_WINDOW_S / bin_s as u64).max(3) as usize;
    if w.is_multiple_of(2) {
        w += 1;
    }
    let mut cap = series_len.max(3);
    if cap.is_multiple_of(2) {
        cap -= 1;
    }
    w.min(cap).max(3)
}

/// CSV body for a fitted series: `bin_start_ms,counts,cpm,baseline,spike`.
pub fn series_csv(series: &ratestats::RateSeries) -> String {
    let baseline = series.baseline().unwrap_or(&[]);
    let flags = series.spike_flags().unwrap_or(&[]);
    let mut out = String::from("bin_start_ms,counts,cpm,baseline,spike\n");
    for i in 0..series.len() {
        let b = baseline.get(i).copied().unwrap_or(0.0);
        let s = flags.get(i).copied().unwrap_or(false);
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{}\n",
            series.bin_start_ms(i),
            series.counts[i],
            series.cpm[i],
            b,
            s as u8
        ));
    }
    out
}

fn coincidence_params(params: &Params) -> Result<CoincidenceParams, ApiError> {
    let defaults = CoincidenceParams::default();
    let window_s = param_f64(params, "window_s", defaults.window_s())?;
    let radius_km = param_f64(params, "radius_km", defaults.radius_km())?;
    let min_devices = param_usize(params, "min_devices", defaults.min_devices())?;
    CoincidenceParams::new(window_s, radius_km, min_devices)
        .map_err(|e| ApiError::bad_parameter(e.to_string()))
}

async fn candidates(
    State(store): State<Arc<EventStore>>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let cparams = coincidence_params(&params)?;
    let (from, to) = time_range(&params)?;
    let events = store.flashes_between(from, to);
    let found = coincidence::detect(&events, &cparams);
    let records: Vec<CandidateRecord> = found.iter().map(CandidateRecord::from).collect();
    Ok(axum::Json(records).into_response())
}

fn parse_bbox(params: &Params) -> Result<Option<BBox>, ApiError> {
    let Some(raw) = params.get("bbox") else { return Ok(None) };
    let parts: Vec<&str> = raw.split(',').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse::<f64>().ok()).collect();
    let nums = nums.filter(|v| v.len() == 4).ok_or_else(|| {
        ApiError::bad_parameter("bbox: expected lat_min,lat_max,lon_min,lon_max")
    })?;
    BBox::new(nums[0], nums[1], nums[2], nums[3])
        .map(Some)
        .map_err(|e| ApiError::bad_parameter(e.to_string()))
}

fn grid_response(
    samples: &[(GeoPoint, f64)],
    bbox: Option<BBox>,
    cell_km: f64,
    kind: GridKind,
) -> Result<Response, ApiError> {
    if !shwr_core::model::is_positive_finite(cell_km) {
        return Err(ApiError::bad_parameter("cell_km: must be positive"));
    }
    let points: Vec<GeoPoint> = samples.iter().map(|(p, _)| *p).collect();
    let bbox = bbox.or_else(|| bbox_for_points(&points, cell_km));
    let geojson = match bbox {
        Some(bbox) => build_grid(samples, bbox, cell_km, kind)
            .map_err(|e| ApiError::bad_parameter(e.to_string()))?
            .to_geojson(),
        // No data and no explicit bbox: an empty collection.
        None => json!({ "type": "FeatureCollection", "features": [] }),
    };
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/geo+json")],
        geojson.to_string(),
    )
        .into_response())
}

async fn map_showers(
    State(store): State<Arc<EventStore>>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let cell_km = param_f64(&params, "cell_km", 1.0)?;
    let bbox = parse_bbox(&params)?;
    let cparams = coincidence_params(&params)?;
    let events = store.flashes_between(None, None);
    let found = coincidence::detect(&events, &cparams);
    // Cell values carry candidate multiplicity; count is candidates/cell.
    let samples: Vec<(GeoPoint, f64)> =
        found.iter().map(|c| (c.epicenter, c.multiplicity as f64)).collect();
    grid_response(&samples, bbox, cell_km, GridKind::ShowerCount)
}

async fn map_pollution(
    State(store): State<Arc<EventStore>>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let cell_km = param_f64(&params, "cell_km", 0.5)?;
    let bbox = parse_bbox(&params)?;
    let samples: Vec<(GeoPoint, f64)> =
        store.tracks().iter().map(|s| (s.geo, s.co_ppm)).collect();
    grid_response(&samples, bbox, cell_km, GridKind::CoPpm)
}

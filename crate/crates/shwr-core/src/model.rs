//! Shared domain types: positions, device profiles and the sensor records
//! exchanged over the `SHWR1` protocol.
//!
//! All types are immutable values validated at construction; every
//! operation here is pure and safe to call from any number of threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IUGG mean Earth radius, kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Bounds accepted for a device sensitivity scale factor. Kept well inside
/// the range where the canonical shortest-decimal formatting never switches
/// to exponent notation.
pub const SENSITIVITY_MIN: f64 = 1e-4;
pub const SENSITIVITY_MAX: f64 = 1e4;

/// Largest accelerometer magnitude accepted, m/s² (roughly ±1000 g).
pub const ACCEL_ABS_MAX: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("altitude must be finite")]
    AltitudeNotFinite,
    #[error("device id must be 1-64 chars of [A-Za-z0-9_-], got {0:?}")]
    BadDeviceId(String),
    #[error("model name must be at most 64 printable ASCII chars without '|', got {0:?}")]
    BadModelName(String),
    #[error("sensitivity must be in [{SENSITIVITY_MIN}, {SENSITIVITY_MAX}], got {0}")]
    BadSensitivity(f64),
    #[error("magnitude must be at least 1")]
    BadMagnitude,
    #[error("concentration must be finite and non-negative, got {0}")]
    BadConcentration(f64),
    #[error("sampling interval must be at least 1 ms")]
    BadSamplingInterval,
    #[error("accel window needs at least 8 finite samples within ±{ACCEL_ABS_MAX} m/s²")]
    BadSamples,
    #[error("unknown axis {0:?} (expected x, y, z or mag)")]
    BadAxis(String),
}

/// True when `x` is a finite, strictly positive number (rejects NaN).
pub fn is_positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// A geographic position. Canonical text form uses exactly 6 fractional
/// digits for lat/lon and 1 for altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self, ModelError> {
        if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
            return Err(ModelError::LatitudeOutOfRange(lat_deg));
        }
        if !lon_deg.is_finite() || !(-180.0..=180.0).contains(&lon_deg) {
            return Err(ModelError::LongitudeOutOfRange(lon_deg));
        }
        if !alt_m.is_finite() {
            return Err(ModelError::AltitudeNotFinite);
        }
        Ok(Self { lat_deg, lon_deg, alt_m })
    }
}

/// Great-circle distance in kilometers between two points, ignoring
/// altitude (clustering at city scale is horizontal).
pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat_deg.to_radians();
    let phi2 = b.lat_deg.to_radians();
    let dphi = (b.lat_deg - a.lat_deg).to_radians();
    let dlambda = (b.lon_deg - a.lon_deg).to_radians();
    let s = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().min(1.0).asin()
}

pub(crate) fn is_valid_device_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

pub(crate) fn is_valid_model_name(name: &str) -> bool {
    name.len() <= 64 && name.bytes().all(|b| (0x20..=0x7e).contains(&b) && b != b'|')
}

/// A registered volunteer device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    /// Free-text hardware model, e.g. `NEXUS7`.
    pub model: String,
    /// Camera resolution in tenths of a megapixel (1.2 Mpx -> 12).
    pub camera_mpx_tenths: u32,
    /// Relative counts per unit flux; 1.0 is the reference device.
    pub sensitivity: f64,
}

impl DeviceProfile {
    pub fn new(
        device_id: &str,
        model: &str,
        camera_mpx_tenths: u32,
        sensitivity: f64,
    ) -> Result<Self, ModelError> {
        if !is_valid_device_id(device_id) {
            return Err(ModelError::BadDeviceId(device_id.to_string()));
        }
        if !is_valid_model_name(model) {
            return Err(ModelError::BadModelName(model.to_string()));
        }
        if !sensitivity.is_finite() || !(SENSITIVITY_MIN..=SENSITIVITY_MAX).contains(&sensitivity) {
            return Err(ModelError::BadSensitivity(sensitivity));
        }
        Ok(Self {
            device_id: device_id.to_string(),
            model: model.to_string(),
            camera_mpx_tenths,
            sensitivity,
        })
    }
}

/// One radiometric detection: a bright-pixel cluster on a shielded camera
/// chip, stamped with UTC time and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlashEvent {
    pub device_id: String,
    pub t_utc_ms: i64,
    pub geo: GeoPoint,
    /// Bright-pixel cluster size, at least 1.
    pub magnitude: u32,
}

impl FlashEvent {
    pub fn new(device_id: &str, t_utc_ms: i64, geo: GeoPoint, magnitude: u32) -> Result<Self, ModelError> {
        if !is_valid_device_id(device_id) {
            return Err(ModelError::BadDeviceId(device_id.to_string()));
        }
        if magnitude < 1 {
            return Err(ModelError::BadMagnitude);
        }
        Ok(Self { device_id: device_id.to_string(), t_utc_ms, geo, magnitude })
    }
}

/// A timestamped, geo-located gas concentration reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub device_id: String,
    pub t_utc_ms: i64,
    pub geo: GeoPoint,
    pub co_ppm: f64,
}

impl TrackSample {
    pub fn new(device_id: &str, t_utc_ms: i64, geo: GeoPoint, co_ppm: f64) -> Result<Self, ModelError> {
        if !is_valid_device_id(device_id) {
            return Err(ModelError::BadDeviceId(device_id.to_string()));
        }
        if !co_ppm.is_finite() || co_ppm < 0.0 {
            return Err(ModelError::BadConcentration(co_ppm));
        }
        Ok(Self { device_id: device_id.to_string(), t_utc_ms, geo, co_ppm })
    }
}

/// Accelerometer axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
    /// Magnitude of the acceleration vector.
    Mag,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
            Axis::Mag => "mag",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            "mag" => Ok(Axis::Mag),
            other => Err(ModelError::BadAxis(other.to_string())),
        }
    }
}

/// A fixed-rate accelerometer capture window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelWindow {
    pub device_id: String,
    pub t0_utc_ms: i64,
    /// Sampling interval, ms.
    pub dt_ms: u32,
    pub axis: Axis,
    /// At least 8 finite accelerations, m/s².
    pub samples: Vec<f64>,
}

impl AccelWindow {
    pub fn new(
        device_id: &str,
        t0_utc_ms: i64,
        dt_ms: u32,
        axis: Axis,
        samples: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if !is_valid_device_id(device_id) {
            return Err(ModelError::BadDeviceId(device_id.to_string()));
        }
        if dt_ms < 1 {
            return Err(ModelError::BadSamplingInterval);
        }
        if samples.len() < 8 || samples.iter().any(|s| !s.is_finite() || s.abs() > ACCEL_ABS_MAX) {
            return Err(ModelError::BadSamples);
        }
        Ok(Self { device_id: device_id.to_string(), t0_utc_ms, dt_ms, axis, samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon, 0.0).unwrap()
    }

    #[test]
    fn haversine_identity() {
        let a = GeoPoint::new(50.450100, 30.523400, 120.0).unwrap();
        assert_eq!(haversine_km(&a, &a), 0.0);
    }

    #[test]
    fn haversine_one_degree_latitude() {
        // Pure meridian arc: the independent oracle is R * dphi.
        let a = p(50.450100, 30.523400);
        let b = p(51.450100, 30.523400);
        let oracle = EARTH_RADIUS_KM * 1.0f64.to_radians();
        let d = haversine_km(&a, &b);
        assert_relative_eq!(d, oracle, max_relative = 1e-12);
        assert!((d - 111.195).abs() < 1e-3);
    }

    #[test]
    fn haversine_symmetry() {
        let a = p(50.4501, 30.5234);
        let b = p(48.2025, 16.3681);
        let ab = haversine_km(&a, &b);
        let ba = haversine_km(&b, &a);
        assert_relative_eq!(ab, ba, max_relative = 1e-12);
        assert!(ab > 0.0);
    }

    #[test]
    fn haversine_ignores_altitude() {
        let a = GeoPoint::new(50.0, 30.0, 0.0).unwrap();
        let b = GeoPoint::new(50.0, 30.0, 9000.0).unwrap();
        assert_eq!(haversine_km(&a, &b), 0.0);
    }

    #[test]
    fn geo_point_rejects_out_of_range() {
        assert!(matches!(GeoPoint::new(91.0, 0.0, 0.0), Err(ModelError::LatitudeOutOfRange(_))));
        assert!(matches!(GeoPoint::new(0.0, -180.5, 0.0), Err(ModelError::LongitudeOutOfRange(_))));
        assert!(matches!(GeoPoint::new(0.0, 0.0, f64::NAN), Err(ModelError::AltitudeNotFinite)));
    }

    #[test]
    fn device_id_rules() {
        assert!(DeviceProfile::new("dev-1_A", "NEXUS7", 12, 1.0).is_ok());
        assert!(DeviceProfile::new("", "m", 0, 1.0).is_err());
        assert!(DeviceProfile::new("a b", "m", 0, 1.0).is_err());
        assert!(DeviceProfile::new(&"x".repeat(65), "m", 0, 1.0).is_err());
        assert!(DeviceProfile::new("ok", "bad|pipe", 0, 1.0).is_err());
        assert!(DeviceProfile::new("ok", "m", 0, 0.0).is_err());
        assert!(DeviceProfile::new("ok", "m", 0, -1.0).is_err());
    }

    #[test]
    fn flash_event_needs_positive_magnitude() {
        let geo = p(50.0, 30.0);
        assert!(matches!(FlashEvent::new("d", 0, geo, 0), Err(ModelError::BadMagnitude)));
        assert!(FlashEvent::new("d", 0, geo, 1).is_ok());
    }

    #[test]
    fn accel_window_rules() {
        let ok = AccelWindow::new("d", 0, 10, Axis::Mag, vec![0.5; 8]);
        assert!(ok.is_ok());
        assert!(AccelWindow::new("d", 0, 10, Axis::X, vec![0.5; 7]).is_err());
        assert!(AccelWindow::new("d", 0, 0, Axis::X, vec![0.5; 8]).is_err());
        assert!(AccelWindow::new("d", 0, 10, Axis::X, vec![f64::INFINITY; 8]).is_err());
    }
}

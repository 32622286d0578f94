//! Canonical line codec for the `SHWR1` record protocol.
//!
//! One record per `\n`-terminated ASCII line, fields separated by `|`:
//!
//! ```text
//! SHWR1|DEV|<device_id>|<model>|<mpx_tenths:int>|<sensitivity:decimal>
//! SHWR1|EV|<device_id>|<t_local_ms:int>|<offset_ms:int>|<lat>|<lon>|<alt_m>|<magnitude:int>
//! SHWR1|CO|<device_id>|<t_local_ms:int>|<offset_ms:int>|<lat>|<lon>|<co_ppm>
//! SHWR1|ACC|<device_id>|<t0_local_ms:int>|<offset_ms:int>|<dt_ms:int>|<axis>|<s1;s2;...;sn>
//! ```
//!
//! Timestamps on the wire are device-local; `t_utc_ms = t_local_ms +
//! offset_ms` (saturating at the i64 boundaries). Decoding always returns
//! UTC-normalized records; encoding a normalized record writes offset 0.
//!
//! Canonical numeric formatting is fixed so that round-trips are byte-exact
//! across implementations: 6 fractional digits for lat/lon, 1 for altitude,
//! 2 for co_ppm, 3 for accel samples, shortest exact decimal for
//! sensitivity, plain integers elsewhere. No checksums; transport handles
//! integrity.

use crate::model::{
    is_valid_device_id, is_valid_model_name, AccelWindow, Axis, DeviceProfile, FlashEvent,
    GeoPoint, TrackSample, SENSITIVITY_MAX, SENSITIVITY_MIN,
};
use thiserror::Error;

pub const MAGIC: &str = "SHWR1";

/// Any record the protocol can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Device(DeviceProfile),
    Flash(FlashEvent),
    Track(TrackSample),
    Accel(AccelWindow),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("bad magic: line must start with '{MAGIC}|'")]
    BadMagic,
    #[error("bad field count for {kind}: expected {expected}, got {got}")]
    BadFieldCount { kind: &'static str, expected: usize, got: usize },
    #[error("bad field value: {field}")]
    BadFieldValue { field: &'static str },
}

fn bad(field: &'static str) -> CodecError {
    CodecError::BadFieldValue { field }
}

/// Encode a UTC-normalized record as one canonical line (offset field 0).
pub fn encode_record(record: &Record) -> String {
    encode_with_offset(record, 0)
}

/// Encode a record against a device-local clock: the line carries
/// `t_local = t_utc - offset_ms` plus the offset, so that ingest-side
/// normalization recovers the UTC time.
pub fn encode_with_offset(record: &Record, offset_ms: i64) -> String {
    match record {
        Record::Device(d) => format!(
            "{MAGIC}|DEV|{}|{}|{}|{:?}\n",
            d.device_id, d.model, d.camera_mpx_tenths, d.sensitivity
        ),
        Record::Flash(e) => format!(
            "{MAGIC}|EV|{}|{}|{}|{:.6}|{:.6}|{:.1}|{}\n",
            e.device_id,
            e.t_utc_ms.saturating_sub(offset_ms),
            offset_ms,
            e.geo.lat_deg,
            e.geo.lon_deg,
            e.geo.alt_m,
            e.magnitude
        ),
        Record::Track(s) => format!(
            "{MAGIC}|CO|{}|{}|{}|{:.6}|{:.6}|{:.2}\n",
            s.device_id,
            s.t_utc_ms.saturating_sub(offset_ms),
            offset_ms,
            s.geo.lat_deg,
            s.geo.lon_deg,
            s.co_ppm
        ),
        Record::Accel(w) => {
            let samples: Vec<String> = w.samples.iter().map(|s| format!("{s:.3}")).collect();
            format!(
                "{MAGIC}|ACC|{}|{}|{}|{}|{}|{}\n",
                w.device_id,
                w.t0_utc_ms.saturating_sub(offset_ms),
                offset_ms,
                w.dt_ms,
                w.axis.as_str(),
                samples.join(";")
            )
        }
    }
}

/// Decode one protocol line (an optional single trailing newline is
/// accepted). Returns the UTC-normalized record or the first offending
/// field.
pub fn decode_record(line: &str) -> Result<Record, CodecError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let rest = line.strip_prefix("SHWR1|").ok_or(CodecError::BadMagic)?;
    let fields: Vec<&str> = rest.split('|').collect();
    let kind = fields[0];
    match kind {
        "DEV" => decode_device(&fields),
        "EV" => decode_flash(&fields),
        "CO" => decode_track(&fields),
        "ACC" => decode_accel(&fields),
        _ => Err(bad("kind")),
    }
}

fn expect_fields(fields: &[&str], kind: &'static str, n: usize) -> Result<(), CodecError> {
    // `fields` excludes the magic, so a full line has n-1 entries here.
    if fields.len() != n - 1 {
        return Err(CodecError::BadFieldCount { kind, expected: n, got: fields.len() + 1 });
    }
    Ok(())
}

fn parse_int(s: &str, field: &'static str) -> Result<i64, CodecError> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad(field));
    }
    s.parse::<i64>().map_err(|_| bad(field))
}

fn parse_uint(s: &str, field: &'static str) -> Result<u32, CodecError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad(field));
    }
    s.parse::<u32>().map_err(|_| bad(field))
}

/// Plain decimal per the grammar: optional sign, digits, optional fraction.
/// No exponents, no inf/nan.
fn parse_decimal(s: &str, field: &'static str) -> Result<f64, CodecError> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits_ok = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) || !frac_part.is_none_or(digits_ok) {
        return Err(bad(field));
    }
    s.parse::<f64>().map_err(|_| bad(field)).and_then(|v| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad(field))
        }
    })
}

fn parse_device_id(s: &str) -> Result<String, CodecError> {
    if !is_valid_device_id(s) {
        return Err(bad("device_id"));
    }
    Ok(s.to_string())
}

fn parse_geo(lat: &str, lon: &str, alt: &str) -> Result<GeoPoint, CodecError> {
    let lat = parse_decimal(lat, "lat")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(bad("lat"));
    }
    let lon = parse_decimal(lon, "lon")?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(bad("lon"));
    }
    let alt = parse_decimal(alt, "alt_m")?;
    Ok(GeoPoint { lat_deg: lat, lon_deg: lon, alt_m: alt })
}

fn decode_device(fields: &[&str]) -> Result<Record, CodecError> {
    expect_fields(fields, "DEV", 6)?;
    let device_id = parse_device_id(fields[1])?;
    let model = fields[2];
    if !is_valid_model_name(model) {
        return Err(bad("model"));
    }
    let mpx = parse_uint(fields[3], "mpx_tenths")?;
    let sensitivity = parse_decimal(fields[4], "sensitivity")?;
    if !(SENSITIVITY_MIN..=SENSITIVITY_MAX).contains(&sensitivity) {
        return Err(bad("sensitivity"));
    }
    Ok(Record::Device(DeviceProfile {
        device_id,
        model: model.to_string(),
        camera_mpx_tenths: mpx,
        sensitivity,
    }))
}

fn decode_flash(fields: &[&str]) -> Result<Record, CodecError> {
    expect_fields(fields, "EV", 9)?;
    let device_id = parse_device_id(fields[1])?;
    let t_local = parse_int(fields[2], "t_local_ms")?;
    let offset = parse_int(fields[3], "offset_ms")?;
    let geo = parse_geo(fields[4], fields[5], fields[6])?;
    let magnitude = parse_uint(fields[7], "magnitude")?;
    if magnitude < 1 {
        return Err(bad("magnitude"));
    }
    Ok(Record::Flash(FlashEvent {
        device_id,
        t_utc_ms: t_local.saturating_add(offset),
        geo,
        magnitude,
    }))
}

fn decode_track(fields: &[&str]) -> Result<Record, CodecError> {
    expect_fields(fields, "CO", 8)?;
    let device_id = parse_device_id(fields[1])?;
    let t_local = parse_int(fields[2], "t_local_ms")?;
    let offset = parse_int(fields[3], "offset_ms")?;
    let geo = parse_geo(fields[4], fields[5], "0.0")?;
    let co_ppm = parse_decimal(fields[6], "co_ppm")?;
    if co_ppm < 0.0 {
        return Err(bad("co_ppm"));
    }
    Ok(Record::Track(TrackSample {
        device_id,
        t_utc_ms: t_local.saturating_add(offset),
        geo,
        co_ppm,
    }))
}

fn decode_accel(fields: &[&str]) -> Result<Record, CodecError> {
    expect_fields(fields, "ACC", 8)?;
    let device_id = parse_device_id(fields[1])?;
    let t0_local = parse_int(fields[2], "t0_local_ms")?;
    let offset = parse_int(fields[3], "offset_ms")?;
    let dt_ms = parse_uint(fields[4], "dt_ms")?;
    if dt_ms < 1 {
        return Err(bad("dt_ms"));
    }
    let axis = Axis::parse(fields[5]).map_err(|_| bad("axis"))?;
    let mut samples = Vec::new();
    for part in fields[6].split(';') {
        let v = parse_decimal(part, "samples")?;
        if v.abs() > crate::model::ACCEL_ABS_MAX {
            return Err(bad("samples"));
        }
        samples.push(v);
    }
    if samples.len() < 8 {
        return Err(bad("samples"));
    }
    Ok(Record::Accel(AccelWindow {
        device_id,
        t0_utc_ms: t0_local.saturating_add(offset),
        dt_ms,
        axis,
        samples,
    }))
}

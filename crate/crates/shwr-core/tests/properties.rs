//! Property tests for the invariants that hold across whole input domains:
//! geodesic distance, codec round-trips, moment invariances, dose
//! integration.

use proptest::prelude::*;
use shwr_core::activity::moments;
use shwr_core::codec::{decode_record, encode_record, encode_with_offset, Record};
use shwr_core::exposure::accumulate_dose;
use shwr_core::model::{
    haversine_km, AccelWindow, Axis, DeviceProfile, FlashEvent, GeoPoint, TrackSample,
};

fn lat_strategy() -> impl Strategy<Value = f64> {
    (-90_000_000i64..=90_000_000).prop_map(|v| v as f64 / 1e6)
}

fn lon_strategy() -> impl Strategy<Value = f64> {
    (-180_000_000i64..=180_000_000).prop_map(|v| v as f64 / 1e6)
}

fn alt_strategy() -> impl Strategy<Value = f64> {
    (-50_000i64..=100_000).prop_map(|v| v as f64 / 10.0)
}

fn geo_strategy() -> impl Strategy<Value = GeoPoint> {
    (lat_strategy(), lon_strategy(), alt_strategy())
        .prop_map(|(lat, lon, alt)| GeoPoint::new(lat, lon, alt).unwrap())
}

fn device_id_strategy() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-Za-z0-9_-]{1,64}").unwrap()
}

fn t_strategy() -> impl Strategy<Value = i64> {
    -(1i64 << 50)..(1i64 << 50)
}

fn offset_strategy() -> impl Strategy<Value = i64> {
    -1_000_000_000i64..=1_000_000_000
}

fn record_strategy() -> impl Strategy<Value = Record> {
    let device = (
        device_id_strategy(),
        proptest::string::string_regex("[a-zA-Z0-9 _.-]{0,64}").unwrap(),
        0u32..=1000,
        1e-4f64..1e4,
    )
        .prop_map(|(id, model, mpx, sens)| {
            Record::Device(DeviceProfile::new(&id, &model, mpx, sens).unwrap())
        });
    let flash = (device_id_strategy(), t_strategy(), geo_strategy(), 1u32..=100_000)
        .prop_map(|(id, t, geo, mag)| {
            Record::Flash(FlashEvent::new(&id, t, geo, mag).unwrap())
        });
    let track = (device_id_strategy(), t_strategy(), lat_strategy(), lon_strategy(), 0u64..=1_000_000)
        .prop_map(|(id, t, lat, lon, centi_ppm)| {
            // CO lines carry no altitude, so the valid wire domain has alt 0.
            let geo = GeoPoint::new(lat, lon, 0.0).unwrap();
            Record::Track(TrackSample::new(&id, t, geo, centi_ppm as f64 / 100.0).unwrap())
        });
    let accel = (
        device_id_strategy(),
        t_strategy(),
        1u32..=10_000,
        prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z), Just(Axis::Mag)],
        proptest::collection::vec((-10_000_000i64..=10_000_000).prop_map(|v| v as f64 / 1000.0), 8..40),
    )
        .prop_map(|(id, t, dt, axis, samples)| {
            Record::Accel(AccelWindow::new(&id, t, dt, axis, samples).unwrap())
        });
    prop_oneof![device, flash, track, accel]
}

proptest! {
    #[test]
    fn haversine_symmetric_and_nonnegative(a in geo_strategy(), b in geo_strategy()) {
        let ab = haversine_km(&a, &b);
        let ba = haversine_km(&b, &a);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn haversine_triangle_inequality(
        a in geo_strategy(),
        b in geo_strategy(),
        c in geo_strategy(),
    ) {
        let ac = haversine_km(&a, &c);
        let ab = haversine_km(&a, &b);
        let bc = haversine_km(&b, &c);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn codec_roundtrip_is_identity(record in record_strategy()) {
        let line = encode_record(&record);
        prop_assert!(line.is_ascii());
        let decoded = decode_record(&line).expect("canonical line decodes");
        prop_assert_eq!(&decoded, &record);
        // Re-encoding the decoded record is byte-exact.
        prop_assert_eq!(encode_record(&decoded), line);
    }

    #[test]
    fn codec_roundtrip_with_offsets(record in record_strategy(), offset in offset_strategy()) {
        let line = encode_with_offset(&record, offset);
        let decoded = decode_record(&line).expect("offset line decodes");
        prop_assert_eq!(decoded, record);
    }

    #[test]
    fn moment_affine_invariance(
        samples in proptest::collection::vec(-10.0f64..10.0, 8..64),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let m0 = match moments(&samples) {
            Ok(m) => m,
            Err(_) => return Ok(()), // zero variance draw
        };
        prop_assume!(m0.std > 1e-3);
        let scaled: Vec<f64> = samples.iter().map(|x| a * x + b).collect();
        let m1 = moments(&scaled).unwrap();
        prop_assert!((m1.std - a * m0.std).abs() <= 1e-9 * m0.std.abs().max(1.0) * a);
        prop_assert!((m1.skewness - m0.skewness).abs() <= 1e-9 * m0.skewness.abs().max(1.0));
        prop_assert!(
            (m1.kurtosis_excess - m0.kurtosis_excess).abs()
                <= 1e-9 * m0.kurtosis_excess.abs().max(1.0)
        );
    }

    #[test]
    fn dose_never_exceeds_unclamped(
        gaps in proptest::collection::vec(1i64..1_000_000, 1..20),
        ppms in proptest::collection::vec(0u32..10_000, 21),
        max_gap_s in 1.0f64..1000.0,
    ) {
        let geo = GeoPoint::new(50.0, 30.0, 0.0).unwrap();
        let mut t = 0i64;
        let mut track = Vec::new();
        for (i, gap) in gaps.iter().enumerate() {
            track.push(TrackSample::new("d", t, geo, ppms[i] as f64 / 100.0).unwrap());
            t += gap;
        }
        track.push(TrackSample::new("d", t, geo, ppms[gaps.len()] as f64 / 100.0).unwrap());
        let clamped = accumulate_dose(&track, max_gap_s).unwrap();
        let unclamped = accumulate_dose(&track, f64::INFINITY).unwrap();
        prop_assert!(clamped <= unclamped + 1e-9);
        prop_assert!(clamped >= 0.0);
    }
}

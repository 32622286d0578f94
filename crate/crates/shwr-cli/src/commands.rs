//! Subcommand implementations. Every command is pure with respect to its
//! input files; only `ingestd` owns (and mutates) its data directory.

use crate::{
    BaselineArgs, ClassifyArgs, CliError, DetectArgs, DoseArgs, FlashscanArgs, IngestdArgs,
    MapKind, MapexportArgs, SimulateArgs, SyncArgs,
};
use shwr_core::activity::{self, ActivityClass, ActivityModel, MomentVector};
use shwr_core::codec::{decode_record, Record};
use shwr_core::coincidence::{self, CandidateRecord, CoincidenceParams};
use shwr_core::exposure::{self, BBox, GridKind};
use shwr_core::flashdetect::{self, Frame, HotPixelMask};
use shwr_core::model::{is_positive_finite, FlashEvent, GeoPoint, TrackSample};
use shwr_core::ratestats::{self, AltitudeModel};
use shwr_core::simfleet::{self, SimConfig};
use shwr_core::timesync::{self, SyncExchange};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Read and decode a whole protocol-line file; any malformed line is a
/// data error naming the position.
fn read_records(path: &Path) -> Result<Vec<Record>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let record = decode_record(line).map_err(|e| {
            CliError::data(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

fn flashes(records: Vec<Record>) -> Vec<FlashEvent> {
    records
        .into_iter()
        .filter_map(|r| match r {
            Record::Flash(e) => Some(e),
            _ => None,
        })
        .collect()
}

/// Write to the file, or stdout when no path is given.
fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(CliError::data)
        }
    }
}

fn parse_bbox(sub: &'static str, raw: &str) -> Result<BBox, CliError> {
    let nums: Vec<f64> = raw.split(',').filter_map(|p| p.trim().parse::<f64>().ok()).collect();
    if nums.len() != 4 {
        return Err(CliError::usage(sub, "--bbox expects lat_min,lat_max,lon_min,lon_max"));
    }
    BBox::new(nums[0], nums[1], nums[2], nums[3])
        .map_err(|e| CliError::usage(sub, e.to_string()))
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    const SUB: &str = "simulate";
    let bbox = parse_bbox(SUB, &args.bbox)?;
    let config = SimConfig {
        n_devices: args.devices,
        bbox,
        duration_h: args.hours,
        background_cpm: args.background_cpm,
        diurnal_amplitude: args.diurnal_amplitude,
        n_showers: args.showers,
        shower_footprint_km: args.footprint_km,
        shower_jitter_ms: args.jitter_ms,
        clock_offset_range_ms: args.offset_range_ms,
        t0_utc_ms: args.t0_ms,
        seed: args.seed,
    };
    config.validate().map_err(|e| CliError::usage(SUB, e.to_string()))?;
    if args.flight {
        let model = AltitudeModel::new(args.r0, args.hd)
            .map_err(|e| CliError::usage(SUB, e.to_string()))?;
        let lines = simfleet::flight_profile(&config, args.ascent_km, &model)
            .map_err(|e| CliError::usage(SUB, e.to_string()))?;
        fs::write(&args.out, lines)
            .map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
        return Ok(());
    }
    let (lines, truth) =
        simfleet::simulate(&config).map_err(|e| CliError::usage(SUB, e.to_string()))?;
    fs::write(&args.out, lines)
        .map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    let truth_path = args.truth.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.json");
        PathBuf::from(p)
    });
    let json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    fs::write(&truth_path, json + "\n")
        .map_err(|e| CliError::data(format!("{}: {e}", truth_path.display())))?;
    Ok(())
}

pub fn detect(args: DetectArgs) -> Result<(), CliError> {
    const SUB: &str = "detect";
    let params = CoincidenceParams::new(args.window_s, args.radius_km, args.min_devices)
        .map_err(|e| CliError::usage(SUB, e.to_string()))?;
    let events = flashes(read_records(&args.input)?);
    let candidates = coincidence::detect(&events, &params);
    let records: Vec<CandidateRecord> = candidates.iter().map(CandidateRecord::from).collect();
    let json = serde_json::to_string_pretty(&records).expect("candidates serialize");
    write_output(&args.out, &(json + "\n"))
}

pub fn baseline(args: BaselineArgs) -> Result<(), CliError> {
    const SUB: &str = "baseline";
    if args.bin_s == 0 {
        return Err(CliError::usage(SUB, "--bin-s must be at least 1"));
    }
    if !is_positive_finite(args.k) {
        return Err(CliError::usage(SUB, "--k must be positive"));
    }
    if args.mad_floor < 0.0 {
        return Err(CliError::usage(SUB, "--mad-floor must be non-negative"));
    }
    let events = flashes(read_records(&args.input)?);
    let device_events: Vec<&FlashEvent> =
        events.iter().filter(|e| e.device_id == args.device).collect();
    let extent = device_events
        .iter()
        .fold(None::<(i64, i64)>, |acc, e| match acc {
            None => Some((e.t_utc_ms, e.t_utc_ms)),
            Some((lo, hi)) => Some((lo.min(e.t_utc_ms), hi.max(e.t_utc_ms))),
        });
    let (t_start, t_end) = match (args.from_ms, args.to_ms, extent) {
        (Some(f), Some(t), _) => (f, t),
        (Some(f), None, Some((_, hi))) => (f, hi + 1),
        (None, Some(t), Some((lo, _))) => (lo, t),
        (None, None, Some((lo, hi))) => (lo, hi + 1),
        (f, t, None) => {
            let start = f.unwrap_or(0);
            (start, t.unwrap_or(start + args.bin_s as i64 * 1000))
        }
    };
    if t_end <= t_start {
        return Err(CliError::usage(SUB, "--to-ms must be greater than --from-ms"));
    }
    let series = ratestats::bin_events(&events, &args.device, args.bin_s, t_start, t_end)
        .map_err(|e| CliError::data(e.to_string()))?;
    let window = match args.window_bins {
        Some(w) => w,
        None => {
            let mut w =
                (ratestats::DEFAULT_BASELINE_WINDOW_S / args.bin_s as u64).max(3) as usize;
            if w.is_multiple_of(2) {
                w += 1;
            }
            let mut cap = series.len().max(3);
            if cap % 2 == 0 {
                cap -= 1;
            }
            w.min(cap).max(3)
        }
    };
    let series = series
        .fit_baseline(window)
        .and_then(|s| s.flag_spikes(args.k, args.mad_floor))
        .map_err(|e| CliError::usage(SUB, e.to_string()))?;
    write_output(&args.out, &shwr_store::http::series_csv(&series))
}

pub fn classify(args: ClassifyArgs) -> Result<(), CliError> {
    const SUB: &str = "classify";
    match (&args.train, &args.model) {
        (Some(train_csv), None) => {
            let out_model = args
                .out_model
                .as_ref()
                .ok_or_else(|| CliError::usage(SUB, "--train requires --out-model"))?;
            let labeled = read_labeled_csv(train_csv)?;
            let model =
                activity::train_model(&labeled).map_err(|e| CliError::data(e.to_string()))?;
            let json = serde_json::to_string_pretty(&model).expect("model serializes");
            fs::write(out_model, json + "\n")
                .map_err(|e| CliError::data(format!("{}: {e}", out_model.display())))?;
            Ok(())
        }
        (None, Some(model_path)) => {
            let input = args
                .input
                .as_ref()
                .ok_or_else(|| CliError::usage(SUB, "--model requires --in"))?;
            let text = fs::read_to_string(model_path)
                .map_err(|e| CliError::data(format!("{}: {e}", model_path.display())))?;
            let model: ActivityModel =
                serde_json::from_str(&text).map_err(|e| CliError::data(format!("model: {e}")))?;
            model.validate().map_err(|e| CliError::data(e.to_string()))?;
            let mut out = String::from("device_id,t0_utc_ms,mean,std,skewness,kurtosis_excess,class\n");
            for record in read_records(input)? {
                let Record::Accel(window) = record else { continue };
                match activity::compute_moments(&window) {
                    Ok(m) => {
                        let class = activity::classify(&model, &m);
                        out.push_str(&format!(
                            "{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                            window.device_id,
                            window.t0_utc_ms,
                            m.mean,
                            m.std,
                            m.skewness,
                            m.kurtosis_excess,
                            class
                        ));
                    }
                    Err(e) => {
                        eprintln!(
                            "warning: skipping window {}@{}: {e}",
                            window.device_id, window.t0_utc_ms
                        );
                    }
                }
            }
            write_output(&args.out, &out)
        }
        _ => Err(CliError::usage(SUB, "use exactly one of --train or --model")),
    }
}

/// Labeled moment vectors: `class,mean,std,skewness,kurtosis_excess` with a
/// header line.
fn read_labeled_csv(path: &Path) -> Result<Vec<(MomentVector, ActivityClass)>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "class,mean,std,skewness,kurtosis_excess" => {}
        _ => {
            return Err(CliError::data(format!(
                "{}: expected header 'class,mean,std,skewness,kurtosis_excess'",
                path.display()
            )))
        }
    }
    let mut labeled = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse::<f64>().map_err(|_| {
                CliError::data(format!("{}:{}: bad {what} value {s:?}", path.display(), idx + 1))
            })
        };
        if fields.len() != 5 {
            return Err(CliError::data(format!(
                "{}:{}: expected 5 fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let class = ActivityClass::parse(fields[0]).ok_or_else(|| {
            CliError::data(format!("{}:{}: unknown class {:?}", path.display(), idx + 1, fields[0]))
        })?;
        labeled.push((
            MomentVector {
                mean: parse(fields[1], "mean")?,
                std: parse(fields[2], "std")?,
                skewness: parse(fields[3], "skewness")?,
                kurtosis_excess: parse(fields[4], "kurtosis_excess")?,
            },
            class,
        ));
    }
    Ok(labeled)
}

pub fn dose(args: DoseArgs) -> Result<(), CliError> {
    const SUB: &str = "dose";
    if !is_positive_finite(args.max_gap_s) {
        return Err(CliError::usage(SUB, "--max-gap-s must be positive"));
    }
    let records = read_records(&args.input)?;
    let track: Vec<TrackSample> = records
        .into_iter()
        .filter_map(|r| match r {
            Record::Track(s) if s.device_id == args.device => Some(s),
            _ => None,
        })
        .collect();
    let dose = exposure::accumulate_dose(&track, args.max_gap_s)
        .map_err(|e| CliError::data(e.to_string()))?;
    println!("{dose:.2} ppm*s");
    Ok(())
}

pub fn mapexport(args: MapexportArgs) -> Result<(), CliError> {
    const SUB: &str = "mapexport";
    let cell_km = args.cell_km.unwrap_or(match args.kind {
        MapKind::Pollution => 0.5,
        MapKind::Showers => 1.0,
    });
    if !is_positive_finite(cell_km) {
        return Err(CliError::usage(SUB, "--cell-km must be positive"));
    }
    let (samples, kind) = match args.kind {
        MapKind::Pollution => {
            let records = read_records(&args.input)?;
            let samples: Vec<(GeoPoint, f64)> = records
                .into_iter()
                .filter_map(|r| match r {
                    Record::Track(s) => Some((s.geo, s.co_ppm)),
                    _ => None,
                })
                .collect();
            (samples, GridKind::CoPpm)
        }
        MapKind::Showers => {
            let text = fs::read_to_string(&args.input)
                .map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
            let candidates: Vec<CandidateRecord> = serde_json::from_str(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
            let samples: Vec<(GeoPoint, f64)> = candidates
                .iter()
                .map(|c| {
                    let geo = GeoPoint {
                        lat_deg: c.epicenter.lat,
                        lon_deg: c.epicenter.lon,
                        alt_m: c.epicenter.alt,
                    };
                    (geo, c.multiplicity as f64)
                })
                .collect();
            (samples, GridKind::ShowerCount)
        }
    };
    let bbox = match &args.bbox {
        Some(raw) => Some(parse_bbox(SUB, raw)?),
        None => {
            let points: Vec<GeoPoint> = samples.iter().map(|(p, _)| *p).collect();
            exposure::bbox_for_points(&points, cell_km)
        }
    };
    let geojson = match bbox {
        Some(bbox) => exposure::build_grid(&samples, bbox, cell_km, kind)
            .map_err(|e| CliError::data(e.to_string()))?
            .to_geojson(),
        None => serde_json::json!({ "type": "FeatureCollection", "features": [] }),
    };
    write_output(&args.out, &(geojson.to_string() + "\n"))
}

pub fn flashscan(args: FlashscanArgs) -> Result<(), CliError> {
    const SUB: &str = "flashscan";
    if !(0.0..=1.0).contains(&args.occupancy) {
        return Err(CliError::usage(SUB, "--occupancy must be in [0, 1]"));
    }
    let load = |path: &Path| -> Result<Frame, CliError> {
        let bytes =
            fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Frame::from_pgm(&bytes, 0)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    };
    let frames: Vec<(PathBuf, Frame)> = args
        .frames
        .iter()
        .map(|p| load(p).map(|f| (p.clone(), f)))
        .collect::<Result<_, _>>()?;
    let mask = if args.mask_frames.is_empty() {
        let first = &frames[0].1;
        HotPixelMask::empty(first.width(), first.height())
    } else {
        let mask_frames: Vec<Frame> =
            args.mask_frames.iter().map(|p| load(p)).collect::<Result<_, _>>()?;
        flashdetect::build_hot_pixel_mask(&mask_frames, args.hot_threshold, args.occupancy)
            .map_err(|e| CliError::data(e.to_string()))?
    };
    let mut out = String::from("file,size,cx,cy\n");
    for (path, frame) in &frames {
        let found = flashdetect::extract_flashes(frame, &mask, args.threshold)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        for flash in found {
            out.push_str(&format!(
                "{},{},{:.3},{:.3}\n",
                path.display(),
                flash.size,
                flash.centroid.0,
                flash.centroid.1
            ));
        }
    }
    write_output(&args.out, &out)
}

pub fn sync(args: SyncArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
    let mut exchanges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<i64> = line.split(',').filter_map(|p| p.trim().parse::<i64>().ok()).collect();
        if nums.len() != 4 {
            return Err(CliError::data(format!(
                "{}:{}: expected t1,t2,t3,t4",
                args.input.display(),
                idx + 1
            )));
        }
        let exchange = SyncExchange::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| {
            CliError::data(format!("{}:{}: {e}", args.input.display(), idx + 1))
        })?;
        exchanges.push(exchange);
    }
    let estimate =
        timesync::estimate_offset(&exchanges).map_err(|e| CliError::data(e.to_string()))?;
    println!("offset_ms={} rtt_ms={}", estimate.offset_ms, estimate.rtt_ms);
    Ok(())
}

pub fn ingestd(args: IngestdArgs) -> Result<(), CliError> {
    const SUB: &str = "ingestd";
    let addr: std::net::SocketAddr = args
        .listen
        .parse()
        .map_err(|_| CliError::usage(SUB, format!("--listen: bad address {:?}", args.listen)))?;
    if args.t_max_ms <= args.t_min_ms {
        return Err(CliError::usage(SUB, "--t-max-ms must be greater than --t-min-ms"));
    }
    let mut config = shwr_store::StoreConfig::new(&args.data_dir);
    config.t_min_ms = args.t_min_ms;
    config.t_max_ms = args.t_max_ms;
    let (store, warnings) =
        shwr_store::EventStore::replay(config).map_err(|e| CliError::data(e.to_string()))?;
    for w in &warnings {
        eprintln!("warning: {}:{}: {} (line skipped)", w.file, w.line_no, w.error);
    }
    let (devices, events) = store.counts();
    eprintln!(
        "shwr ingestd: {devices} devices, {events} events replayed from {}",
        args.data_dir.display()
    );
    eprintln!("listening on http://{addr}");
    let store = Arc::new(store);
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    runtime
        .block_on(async move {
            let listener = tokio::net::TcpListener::bind(addr).await?;
            axum::serve(listener, shwr_store::http::router(store))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
        })
        .map_err(CliError::data)
}

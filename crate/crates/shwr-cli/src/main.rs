//! `shwr` — one binary for every pipeline stage: simulate a fleet, run the
//! ingestion service, detect coincidences, fit baselines, classify
//! activity windows, integrate exposure dose, export grid maps, scan
//! camera frames and estimate clock offsets.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "shwr",
    version,
    about = "Crowd-sensed air-shower toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ingestion service over a data directory
    Ingestd(IngestdArgs),
    /// Generate a deterministic fleet simulation (or a flight profile)
    Simulate(SimulateArgs),
    /// Detect multi-device shower candidates in a protocol-line file
    Detect(DetectArgs),
    /// Bin a device's events and emit cpm, baseline and spike flags as CSV
    Baseline(BaselineArgs),
    /// Train or apply the activity classifier
    Classify(ClassifyArgs),
    /// Integrate gas-exposure dose along one device's track
    Dose(DoseArgs),
    /// Export a GeoJSON grid map from samples or candidates
    Mapexport(MapexportArgs),
    /// Extract flashes from PGM camera frames
    Flashscan(FlashscanArgs),
    /// Estimate a clock offset from sync-exchange quadruples
    Sync(SyncArgs),
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct IngestdArgs {
    /// Listen address
    #[arg(long, env = "SHWR_LISTEN", default_value = "127.0.0.1:8080")]
    listen: String,
    /// Data directory for the append-only logs
    #[arg(long, env = "SHWR_DATA_DIR")]
    data_dir: PathBuf,
    /// Lower bound for accepted event times, ms since epoch
    #[arg(long, default_value_t = 0)]
    t_min_ms: i64,
    /// Upper bound (exclusive) for accepted event times, ms since epoch
    #[arg(long, default_value_t = shwr_store::store::DEFAULT_T_MAX_MS)]
    t_max_ms: i64,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    /// Output file for protocol lines
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar JSON (default: `<out>.truth.json`)
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    devices: usize,
    #[arg(long, default_value_t = 24.0)]
    hours: f64,
    #[arg(long, default_value_t = 5.0)]
    background_cpm: f64,
    #[arg(long, default_value_t = 0.3)]
    diurnal_amplitude: f64,
    #[arg(long, default_value_t = 20)]
    showers: usize,
    #[arg(long, default_value_t = 1.0)]
    footprint_km: f64,
    #[arg(long, default_value_t = 200)]
    jitter_ms: i64,
    #[arg(long, default_value_t = 5000)]
    offset_range_ms: i64,
    /// Simulation epoch, ms since Unix epoch (0 = midnight local)
    #[arg(long, default_value_t = 0)]
    t0_ms: i64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// City area as lat_min,lat_max,lon_min,lon_max
    #[arg(long, value_name = "LAT0,LAT1,LON0,LON1", default_value = "50.35,50.55,30.35,30.70")]
    bbox: String,
    /// Simulate the two-tablet flight profile instead of the city fleet
    #[arg(long)]
    flight: bool,
    /// Ground-level rate for the flight altitude law, cpm
    #[arg(long, default_value_t = 1.0)]
    r0: f64,
    /// Doubling height for the flight altitude law, km
    #[arg(long, default_value_t = 1.5)]
    hd: f64,
    /// Cruise altitude of the flight profile, km
    #[arg(long, default_value_t = 9.0)]
    ascent_km: f64,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct DetectArgs {
    /// Input protocol-line file
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output JSON file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    window_s: f64,
    #[arg(long, default_value_t = 2.0)]
    radius_km: f64,
    #[arg(long, default_value_t = 2)]
    min_devices: usize,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct BaselineArgs {
    /// Input protocol-line file
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Device id to bin
    #[arg(long)]
    device: String,
    #[arg(long, default_value_t = 60)]
    bin_s: u32,
    /// Range start, ms (default: first event)
    #[arg(long)]
    from_ms: Option<i64>,
    /// Range end (exclusive), ms (default: past the last event)
    #[arg(long)]
    to_ms: Option<i64>,
    /// Baseline median window in bins, odd (default: 6 h of bins)
    #[arg(long)]
    window_bins: Option<usize>,
    /// Spike threshold in robust sigmas
    #[arg(long, default_value_t = shwr_core::ratestats::DEFAULT_SPIKE_K)]
    k: f64,
    /// Robust sigma floor, cpm
    #[arg(long, default_value_t = shwr_core::ratestats::DEFAULT_MAD_FLOOR_CPM)]
    mad_floor: f64,
    /// Output CSV file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct ClassifyArgs {
    /// Train a model from a labeled CSV (class,mean,std,skewness,kurtosis_excess)
    #[arg(long, value_name = "CSV")]
    train: Option<PathBuf>,
    /// Where to write the trained model JSON
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Model JSON for classification
    #[arg(long)]
    model: Option<PathBuf>,
    /// Protocol-line file with ACC records to classify
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Output CSV file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct DoseArgs {
    /// Input protocol-line file with CO records
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Device id to integrate
    #[arg(long)]
    device: String,
    /// Gap clamp, seconds
    #[arg(long, default_value_t = shwr_core::exposure::DEFAULT_MAX_GAP_S)]
    max_gap_s: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MapKind {
    /// Grid of CO track samples
    Pollution,
    /// Grid of detected shower-candidate epicenters
    Showers,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct MapexportArgs {
    /// Input file: protocol lines (pollution) or detect JSON (showers)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: MapKind,
    /// Cell edge, km (default: 0.5 pollution, 1.0 showers)
    #[arg(long)]
    cell_km: Option<f64>,
    /// Grid bounds as lat_min,lat_max,lon_min,lon_max (default: data extent)
    #[arg(long, value_name = "LAT0,LAT1,LON0,LON1")]
    bbox: Option<String>,
    /// Output GeoJSON file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct FlashscanArgs {
    /// PGM (P5) frames to scan
    #[arg(required = true)]
    frames: Vec<PathBuf>,
    /// Luma threshold for bright pixels
    #[arg(long, default_value_t = shwr_core::flashdetect::DEFAULT_LUMA_THRESHOLD)]
    threshold: u8,
    /// Dark frames for the hot-pixel mask (at least 10)
    #[arg(long, num_args = 1..)]
    mask_frames: Vec<PathBuf>,
    /// Luma threshold used when building the mask
    #[arg(long, default_value_t = 200)]
    hot_threshold: u8,
    /// Occupancy fraction above which a pixel is hot
    #[arg(long, default_value_t = shwr_core::flashdetect::DEFAULT_HOT_OCCUPANCY)]
    occupancy: f64,
    /// Output CSV file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct SyncArgs {
    /// CSV file of exchanges: t1,t2,t3,t4 per line (ms)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
}

/// Handler-level failures, mapped onto the exit-code contract.
enum CliError {
    /// Bad flag values or flag combinations (exit 1).
    Usage { subcommand: &'static str, reason: String },
    /// Unreadable or malformed data (exit 2).
    Data(String),
}

impl CliError {
    fn usage(subcommand: &'static str, reason: impl Into<String>) -> Self {
        CliError::Usage { subcommand, reason: reason.into() }
    }

    fn data(reason: impl std::fmt::Display) -> Self {
        CliError::Data(reason.to_string())
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match cli.command {
        Command::Ingestd(args) => commands::ingestd(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Detect(args) => commands::detect(args),
        Command::Baseline(args) => commands::baseline(args),
        Command::Classify(args) => commands::classify(args),
        Command::Dose(args) => commands::dose(args),
        Command::Mapexport(args) => commands::mapexport(args),
        Command::Flashscan(args) => commands::flashscan(args),
        Command::Sync(args) => commands::sync(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage { subcommand, reason }) => {
            eprintln!("error: {reason}");
            let mut root = Cli::command();
            if let Some(sub) = root.find_subcommand_mut(subcommand) {
                let usage = sub.render_usage().to_string();
                eprintln!("{}", usage.replacen("Usage: ", "Usage: shwr ", 1));
            }
            1
        }
        Err(CliError::Data(reason)) => {
            eprintln!("error: {reason}");
            2
        }
    }
}

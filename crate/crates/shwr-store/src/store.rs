//! Append-only event store.
//!
//! Accepted lines are normalized to UTC and written in canonical form to
//! `events-YYYYMMDD.log` in the data directory, flushed before the payload
//! is acknowledged: a crash can lose an unacknowledged payload but never an
//! acknowledged one. Ingests are serialized (single writer); queries read a
//! consistent snapshot, and a payload's records become visible to queries
//! all at once.
//!
//! Duplicate submissions are not deduplicated; resubmitting a payload
//! stores its events twice. Re-registering a device id updates its profile.

use chrono::Utc;
use parking_lot::RwLock;
use shwr_core::codec::{decode_record, encode_record, CodecError, Record};
use shwr_core::model::{AccelWindow, DeviceProfile, FlashEvent, TrackSample};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use thiserror::Error;

/// Default upper bound for event timestamps: 2100-01-01T00:00:00Z.
pub const DEFAULT_T_MAX_MS: i64 = 4_102_444_800_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
}

/// Why one payload line was rejected. Rejections never block the other
/// lines of a payload.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LineError {
    #[error("{0}")]
    Decode(CodecError),
    #[error("unknown device: {device_id:?} is not registered")]
    UnknownDevice { device_id: String },
    #[error("bad field value: t_local_ms (normalized time {t_utc_ms} outside the store range)")]
    TimeOutOfRange { t_utc_ms: i64 },
}

impl LineError {
    /// Machine-readable error code for API bodies.
    pub fn code(&self) -> &'static str {
        match self {
            LineError::Decode(CodecError::BadMagic) => "bad_magic",
            LineError::Decode(CodecError::BadFieldCount { .. }) => "bad_field_count",
            LineError::Decode(CodecError::BadFieldValue { .. }) => "bad_field_value",
            LineError::UnknownDevice { .. } => "unknown_device",
            LineError::TimeOutOfRange { .. } => "bad_field_value",
        }
    }
}

/// Outcome of one ingest payload.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub accepted: u64,
    /// (1-based line number, error) for every rejected line.
    pub rejected: Vec<(usize, LineError)>,
}

/// A skipped line found during replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayWarning {
    pub file: String,
    pub line_no: usize,
    pub error: LineError,
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub data_dir: PathBuf,
    /// Accepted range for normalized flash-event times, left-closed
    /// `[t_min_ms, t_max_ms)`.
    pub t_min_ms: i64,
    pub t_max_ms: i64,
}

impl StoreConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), t_min_ms: 0, t_max_ms: DEFAULT_T_MAX_MS }
    }
}

struct LogWriter {
    date: String,
    writer: BufWriter<File>,
}

#[derive(Default)]
struct Inner {
    devices: BTreeMap<String, DeviceProfile>,
    flashes: Vec<FlashEvent>,
    tracks: Vec<TrackSample>,
    accels: Vec<AccelWindow>,
    accepted: u64,
    rejected: u64,
}

/// Thread-safe event store; share via `Arc`.
pub struct EventStore {
    config: StoreConfig,
    inner: RwLock<Inner>,
    // Separate lock for the active log file so the writer is serialized
    // independently of snapshot readers.
    log: parking_lot::Mutex<Option<LogWriter>>,
}

impl EventStore {
    /// Open a store over `data_dir` (created if missing) without reading
    /// existing logs; use [`EventStore::replay`] to restore state.
    pub fn open(config: StoreConfig) -> Result<Self, StoreError> {
        std::fs::create_dir_all(&config.data_dir)?;
        Ok(Self { config, inner: RwLock::new(Inner::default()), log: parking_lot::Mutex::new(None) })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Rebuild a store from the log files in `config.data_dir`, applying
    /// lines exactly as ingest does (logs hold canonical offset-0 lines).
    /// Corrupt lines are skipped and reported; replay continues.
    pub fn replay(config: StoreConfig) -> Result<(Self, Vec<ReplayWarning>), StoreError> {
        let store = Self::open(config)?;
        let mut warnings = Vec::new();
        let mut log_files: Vec<PathBuf> = std::fs::read_dir(&store.config.data_dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("events-") && n.ends_with(".log"))
                    .unwrap_or(false)
            })
            .collect();
        log_files.sort();
        {
            let mut inner = store.inner.write();
            for path in log_files {
                let file_name =
                    path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                let reader = BufReader::new(File::open(&path)?);
                for (idx, line) in reader.lines().enumerate() {
                    let line = line?;
                    match validate_line(&line, &store.config, &inner.devices) {
                        Ok(record) => {
                            apply_record(&mut inner, record);
                            inner.accepted += 1;
                        }
                        Err(error) => {
                            inner.rejected += 1;
                            warnings.push(ReplayWarning {
                                file: file_name.clone(),
                                line_no: idx + 1,
                                error,
                            });
                        }
                    }
                }
            }
        }
        Ok((store, warnings))
    }

    /// Ingest a payload of protocol lines. Each line is decoded and
    /// validated independently; accepted lines are appended to today's log
    /// and flushed before they are acknowledged or become visible to
    /// queries. An I/O failure aborts the whole payload with nothing
    /// acknowledged.
    pub fn ingest_lines(&self, payload: &str) -> Result<IngestReport, StoreError> {
        let mut lines: Vec<&str> = payload.split('\n').collect();
        if payload.ends_with('\n') {
            lines.pop();
        }

        // Serialize ingests end-to-end: validation must see the device set
        // as of this payload's position in the ingest order.
        let mut log_guard = self.log.lock();
        let snapshot_devices = self.inner.read().devices.clone();
        let mut new_devices = snapshot_devices.clone();
        let mut accepted: Vec<Record> = Vec::new();
        let mut rejected: Vec<(usize, LineError)> = Vec::new();
        for (idx, line) in lines.iter().enumerate() {
            match validate_line(line, &self.config, &new_devices) {
                Ok(record) => {
                    if let Record::Device(profile) = &record {
                        new_devices.insert(profile.device_id.clone(), profile.clone());
                    }
                    accepted.push(record);
                }
                Err(err) => rejected.push((idx + 1, err)),
            }
        }

        // Append-then-acknowledge: all canonical lines hit the file and the
        // file is flushed before the in-memory state changes.
        if !accepted.is_empty() {
            let writer = self.writer_for_today(&mut log_guard)?;
            for record in &accepted {
                writer.write_all(encode_record(record).as_bytes())?;
            }
            writer.flush()?;
            writer.get_ref().sync_data()?;
        }

        let mut inner = self.inner.write();
        let n_accepted = accepted.len() as u64;
        for record in accepted {
            apply_record(&mut inner, record);
        }
        inner.accepted += n_accepted;
        inner.rejected += rejected.len() as u64;
        Ok(IngestReport { accepted: n_accepted, rejected })
    }

    fn writer_for_today<'a>(
        &self,
        guard: &'a mut Option<LogWriter>,
    ) -> Result<&'a mut BufWriter<File>, StoreError> {
        let date = Utc::now().format("%Y%m%d").to_string();
        let stale = guard.as_ref().map(|w| w.date != date).unwrap_or(true);
        if stale {
            let path = self.config.data_dir.join(format!("events-{date}.log"));
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            *guard = Some(LogWriter { date, writer: BufWriter::new(file) });
        }
        Ok(&mut guard.as_mut().expect("writer just ensured").writer)
    }

    /// Registered devices, ordered by id.
    pub fn devices(&self) -> Vec<DeviceProfile> {
        self.inner.read().devices.values().cloned().collect()
    }

    pub fn device(&self, device_id: &str) -> Option<DeviceProfile> {
        self.inner.read().devices.get(device_id).cloned()
    }

    /// (registered devices, stored flash events).
    pub fn counts(&self) -> (usize, usize) {
        let inner = self.inner.read();
        (inner.devices.len(), inner.flashes.len())
    }

    /// (accepted, rejected) line counters over the store's lifetime.
    pub fn line_counters(&self) -> (u64, u64) {
        let inner = self.inner.read();
        (inner.accepted, inner.rejected)
    }

    /// One device's flash events sorted by time, ties by magnitude then
    /// insertion order. `None` when the device is not registered.
    pub fn device_events(&self, device_id: &str) -> Option<Vec<FlashEvent>> {
        let inner = self.inner.read();
        if !inner.devices.contains_key(device_id) {
            return None;
        }
        let mut events: Vec<FlashEvent> =
            inner.flashes.iter().filter(|e| e.device_id == device_id).cloned().collect();
        events.sort_by_key(|e| (e.t_utc_ms, e.magnitude));
        Some(events)
    }

    /// All flash events with `t_utc_ms` in `[from, to)`; `None` bounds are
    /// open.
    pub fn flashes_between(&self, from_ms: Option<i64>, to_ms: Option<i64>) -> Vec<FlashEvent> {
        self.inner
            .read()
            .flashes
            .iter()
            .filter(|e| from_ms.is_none_or(|f| e.t_utc_ms >= f))
            .filter(|e| to_ms.is_none_or(|t| e.t_utc_ms < t))
            .cloned()
            .collect()
    }

    pub fn tracks(&self) -> Vec<TrackSample> {
        self.inner.read().tracks.clone()
    }

    pub fn accel_windows(&self) -> Vec<AccelWindow> {
        self.inner.read().accels.clone()
    }

    /// (min, max) flash time for one device, if it has events.
    pub fn device_time_extent(&self, device_id: &str) -> Option<(i64, i64)> {
        let inner = self.inner.read();
        let mut extent: Option<(i64, i64)> = None;
        for e in inner.flashes.iter().filter(|e| e.device_id == device_id) {
            extent = Some(match extent {
                None => (e.t_utc_ms, e.t_utc_ms),
                Some((lo, hi)) => (lo.min(e.t_utc_ms), hi.max(e.t_utc_ms)),
            });
        }
        extent
    }

    /// Record-set snapshot for equality checks (tests, replay audits):
    /// devices plus sorted copies of all stored records.
    pub fn snapshot(&self) -> StoreSnapshot {
        let inner = self.inner.read();
        let mut flashes = inner.flashes.clone();
        flashes.sort_by(|a, b| {
            (a.t_utc_ms, &a.device_id, a.magnitude).cmp(&(b.t_utc_ms, &b.device_id, b.magnitude))
        });
        let mut tracks = inner.tracks.clone();
        tracks.sort_by(|a, b| {
            (a.t_utc_ms, &a.device_id)
                .cmp(&(b.t_utc_ms, &b.device_id))
                .then(a.co_ppm.total_cmp(&b.co_ppm))
        });
        let mut accels = inner.accels.clone();
        accels.sort_by(|a, b| (a.t0_utc_ms, &a.device_id).cmp(&(b.t0_utc_ms, &b.device_id)));
        StoreSnapshot { devices: inner.devices.clone(), flashes, tracks, accels }
    }
}

/// Order-normalized copy of a store's records.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreSnapshot {
    pub devices: BTreeMap<String, DeviceProfile>,
    pub flashes: Vec<FlashEvent>,
    pub tracks: Vec<TrackSample>,
    pub accels: Vec<AccelWindow>,
}

fn validate_line(
    line: &str,
    config: &StoreConfig,
    devices: &BTreeMap<String, DeviceProfile>,
) -> Result<Record, LineError> {
    let record = decode_record(line).map_err(LineError::Decode)?;
    let device_id = match &record {
        Record::Device(_) => None,
        Record::Flash(e) => Some(&e.device_id),
        Record::Track(s) => Some(&s.device_id),
        Record::Accel(w) => Some(&w.device_id),
    };
    if let Some(id) = device_id {
        if !devices.contains_key(id) {
            return Err(LineError::UnknownDevice { device_id: id.clone() });
        }
    }
    if let Record::Flash(e) = &record {
        if e.t_utc_ms < config.t_min_ms || e.t_utc_ms >= config.t_max_ms {
            return Err(LineError::TimeOutOfRange { t_utc_ms: e.t_utc_ms });
        }
    }
    Ok(record)
}

fn apply_record(inner: &mut Inner, record: Record) {
    match record {
        Record::Device(p) => {
            inner.devices.insert(p.device_id.clone(), p);
        }
        Record::Flash(e) => inner.flashes.push(e),
        Record::Track(s) => inner.tracks.push(s),
        Record::Accel(w) => inner.accels.push(w),
    }
}

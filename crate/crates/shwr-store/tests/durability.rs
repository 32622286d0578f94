//! Durability contract: whatever was acknowledged survives a restart.

use shwr_store::{EventStore, StoreConfig};
use std::sync::Arc;
use std::thread;

fn ev_line(device: usize, t_ms: i64, magnitude: u32) -> String {
    format!("SHWR1|EV|d{device:02}|{t_ms}|0|50.450100|30.523400|0.0|{magnitude}\n")
}

#[test]
fn concurrent_ingests_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = StoreConfig::new(dir.path());
    let store = Arc::new(EventStore::open(cfg.clone()).unwrap());

    // Register devices up front.
    let mut devs = String::new();
    for d in 0..8 {
        devs.push_str(&format!("SHWR1|DEV|d{d:02}|SIM|80|1.0\n"));
    }
    assert_eq!(store.ingest_lines(&devs).unwrap().accepted, 8);

    // 8 writer threads x 125 payloads = 1000 concurrent submissions.
    let mut handles = Vec::new();
    for d in 0..8usize {
        let store = Arc::clone(&store);
        handles.push(thread::spawn(move || {
            let mut acknowledged = 0u64;
            for i in 0..125i64 {
                let payload =
                    format!("{}{}", ev_line(d, i * 1000, 1), ev_line(d, i * 1000 + 1, 2));
                let report = store.ingest_lines(&payload).unwrap();
                assert!(report.rejected.is_empty());
                acknowledged += report.accepted;
            }
            acknowledged
        }));
    }
    let total_acknowledged: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(total_acknowledged, 8 * 125 * 2);

    let before = store.snapshot();
    assert_eq!(before.flashes.len(), 2000);
    drop(store); // "process restart"

    let (replayed, warnings) = EventStore::replay(cfg).unwrap();
    assert!(warnings.is_empty(), "no corrupt lines expected: {warnings:?}");
    let after = replayed.snapshot();
    assert_eq!(after, before, "replayed store must equal the pre-restart store");
}

#[test]
fn interleaved_queries_see_whole_payloads() {
    // A payload's two events become visible atomically: a reader never
    // observes an odd per-device count.
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(EventStore::open(StoreConfig::new(dir.path())).unwrap());
    store.ingest_lines("SHWR1|DEV|d00|SIM|80|1.0\n").unwrap();

    let writer = {
        let store = Arc::clone(&store);
        thread::spawn(move || {
            for i in 0..200i64 {
                let payload = format!("{}{}", ev_line(0, i, 1), ev_line(0, i, 2));
                store.ingest_lines(&payload).unwrap();
            }
        })
    };
    let reader = {
        let store = Arc::clone(&store);
        thread::spawn(move || {
            for _ in 0..500 {
                let n = store.device_events("d00").unwrap().len();
                assert_eq!(n % 2, 0, "saw a torn payload: {n} events");
            }
        })
    };
    writer.join().unwrap();
    reader.join().unwrap();
}

//! Ingestion and query service for `SHWR1` records.
//!
//! [`store::EventStore`] accepts protocol-line payloads, normalizes
//! device-local timestamps to UTC at the boundary, and persists accepted
//! records to append-only daily log files that double as the audit trail —
//! replaying the data directory reconstructs the store exactly. [`http`]
//! serves the ingest and query endpoints over the store.

pub mod http;
pub mod store;

pub use store::{EventStore, IngestReport, LineError, ReplayWarning, StoreConfig, StoreError};

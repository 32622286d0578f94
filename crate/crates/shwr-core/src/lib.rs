//! Core library of the SHWR crowd-sensing toolkit.
//!
//! Volunteer devices submit radiometric flash events, gas-concentration
//! track samples and accelerometer windows as `SHWR1|...` protocol lines.
//! This crate holds everything needed to produce, parse and analyze those
//! records:
//!
//! - [`model`] — shared domain types and geodesic distance
//! - [`codec`] — the canonical line codec for the wire/persistence format
//! - [`flashdetect`] — bright-pixel clustering on shielded camera frames
//! - [`timesync`] — clock-offset estimation from timestamp quadruples
//! - [`ratestats`] — binned count rates, robust baselines, spike flags,
//!   altitude-dependence fits
//! - [`coincidence`] — multi-device spatio-temporal shower candidates
//! - [`activity`] — statistical-moment features and activity classification
//! - [`exposure`] — personal dose integration and spatial grid maps
//! - [`simfleet`] — deterministic fleet simulator and detector evaluation
//!
//! The hot inner loops (simulation, clustering, rolling medians) fan out
//! over rayon when the default `parallel` feature is enabled; build with
//! `--no-default-features` for a fully sequential library. Every parallel
//! entry point has a `*_seq` twin that is always available, used by the
//! criterion benches and the differential tests.

pub mod activity;
pub mod codec;
pub mod coincidence;
pub mod exposure;
pub mod flashdetect;
pub mod model;
mod par;
pub mod ratestats;
pub mod rng;
pub mod simfleet;
pub mod timesync;

pub use codec::{decode_record, encode_record, encode_with_offset, Record};
pub use model::{haversine_km, AccelWindow, DeviceProfile, FlashEvent, GeoPoint, TrackSample};

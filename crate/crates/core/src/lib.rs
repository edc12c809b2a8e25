//! Federated anomaly hunting over a simulated cluster-based blockchain IIoT network.
//!
//! The crate covers the data model, five anomaly detectors, federated
//! averaging, network topology, a discrete-event chain simulator, CSV ingest
//! and evaluation metrics. The `blockhunter` binary lives in the cli crate.

pub mod chainsim;
pub mod data;
pub mod detectors;
pub mod error;
pub mod federation;
pub mod ingest;
pub mod metrics;
pub mod topology;

pub use data::{Dataset, DetectorKind, Label, ModelParams, Sample, SeededRng, Stream};
pub use error::{Error, Result};

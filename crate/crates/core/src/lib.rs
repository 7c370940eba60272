//! Traffic-analysis toolkit for encrypted DNS (DoT/DoH): traces, capture
//! ingest, fingerprinting attacks, synthetic workloads, and evaluation.

pub mod distance;
pub mod eval;
pub mod features;
pub mod forest;
pub mod ingest;
pub mod knn;
pub mod synth;
pub mod trace;

pub use trace::{validate_trace, Dataset, Direction, DnsEvent, Protocol, Trace, Violation};

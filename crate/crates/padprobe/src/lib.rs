//! Audits encrypted-DNS resolvers for EDNS0 padding compliance.

pub mod classify;
pub mod probe;
pub mod report;
pub mod wire;

pub use classify::{classify_padding, Verdict};
pub use probe::{
    default_probe_specs, probe_all, probe_target, HttpMethod, ProbeResult, ProbeTarget,
    QueryOutcome, ResponseRecord,
};
pub use report::{read_targets_csv, summarize, write_report_csv, write_report_json, ReportError};
pub use wire::{build_query, parse_message, DnsQuerySpec, QType, WireError};

//! Core data model: timed, direction-tagged TLS record sizes per app launch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which way an encrypted DNS record travelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Client to resolver (a query).
    #[serde(rename = "c2r")]
    ClientToResolver,
    /// Resolver to client (a response).
    #[serde(rename = "r2c")]
    ResolverToClient,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::ClientToResolver => write!(f, "c2r"),
            Direction::ResolverToClient => write!(f, "r2c"),
        }
    }
}

/// Encrypted DNS transport the trace was captured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// DNS over TLS (TCP port 853).
    #[serde(rename = "dot")]
    Dot,
    /// DNS over HTTPS.
    #[serde(rename = "doh")]
    Doh,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Dot => "dot",
            Protocol::Doh => "doh",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Protocol::Dot),
            "doh" => Ok(Protocol::Doh),
            other => Err(TraceError::BadProtocol(other.to_string())),
        }
    }
}

/// One observed TLS application-data record.
///
/// `t_ms` is milliseconds since the first record of the trace; `size` is the
/// record payload length in bytes as announced by the TLS record header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsEvent {
    pub t_ms: u64,
    pub dir: Direction,
    pub size: u32,
}

/// All encrypted DNS records observed during one app launch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: String,
    /// Ground-truth label: the app that produced the traffic.
    pub app: String,
    /// Resolver the device was configured with (e.g. "google").
    pub resolver: String,
    pub protocol: Protocol,
    /// Informational capture time, RFC 3339.
    pub collected_at: String,
    pub events: Vec<DnsEvent>,
}

/// One structural defect found in a trace. Violations are data for the
/// caller to report, not faults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyTrace,
    NonMonotoneTimestamps { index: usize },
    ZeroSize { index: usize },
    EmptyLabel(&'static str),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyTrace => write!(f, "empty trace"),
            Violation::NonMonotoneTimestamps { index } => {
                write!(f, "non-monotone timestamps at event {index}")
            }
            Violation::ZeroSize { index } => write!(f, "zero size at event {index}"),
            Violation::EmptyLabel(field) => write!(f, "empty {field}"),
        }
    }
}

/// Checks the structural invariants every consumer of a trace relies on:
/// nonempty labels, at least one event, non-decreasing timestamps, and
/// nonzero record sizes. Returns all violations; empty means valid.
pub fn validate_trace(t: &Trace) -> Vec<Violation> {
    let mut violations = Vec::new();
    if t.trace_id.is_empty() {
        violations.push(Violation::EmptyLabel("trace_id"));
    }
    if t.app.is_empty() {
        violations.push(Violation::EmptyLabel("app"));
    }
    if t.events.is_empty() {
        violations.push(Violation::EmptyTrace);
    }
    let mut prev = 0u64;
    for (index, ev) in t.events.iter().enumerate() {
        if ev.t_ms < prev {
            violations.push(Violation::NonMonotoneTimestamps { index });
        }
        if ev.size == 0 {
            violations.push(Violation::ZeroSize { index });
        }
        prev = prev.max(ev.t_ms);
    }
    violations
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace {trace_id:?} invalid: {}", summarize_violations(.violations))]
    Invalid {
        trace_id: String,
        violations: Vec<Violation>,
    },
    #[error("unknown protocol {0:?} (expected \"dot\" or \"doh\")")]
    BadProtocol(String),
    #[error("duplicate trace_id {0:?}")]
    DuplicateTraceId(String),
}

pub(crate) fn summarize_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(Violation::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Trace {
    /// Hard-fail form of [`validate_trace`].
    pub fn validate(&self) -> Result<(), TraceError> {
        let violations = validate_trace(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(TraceError::Invalid {
                trace_id: self.trace_id.clone(),
                violations,
            })
        }
    }

    /// Record sizes with responses positive and queries negative, in event
    /// order. This signed view is what the fingerprinting features consume.
    pub fn signed_sizes(&self) -> Vec<i64> {
        self.events
            .iter()
            .map(|ev| match ev.dir {
                Direction::ClientToResolver => -i64::from(ev.size),
                Direction::ResolverToClient => i64::from(ev.size),
            })
            .collect()
    }
}

/// A set of traces plus an index from app label to trace positions.
#[derive(Debug, Clone)]
pub struct Dataset {
    traces: Vec<Trace>,
    label_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, validating every trace and rejecting duplicate ids.
    pub fn new(traces: Vec<Trace>) -> Result<Self, TraceError> {
        let mut seen = std::collections::HashSet::new();
        let mut label_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, trace) in traces.iter().enumerate() {
            trace.validate()?;
            if !seen.insert(trace.trace_id.clone()) {
                return Err(TraceError::DuplicateTraceId(trace.trace_id.clone()));
            }
            label_index.entry(trace.app.clone()).or_default().push(i);
        }
        Ok(Dataset {
            traces,
            label_index,
        })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// App labels in sorted order.
    pub fn labels(&self) -> Vec<&str> {
        self.label_index.keys().map(String::as_str).collect()
    }

    /// Trace positions for one app label, in insertion order.
    pub fn indices_for(&self, app: &str) -> &[usize] {
        self.label_index.get(app).map_or(&[], Vec::as_slice)
    }

    /// Splits off the traces at the given positions into a new dataset,
    /// preserving order. Positions must be valid and distinct.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let traces: Vec<Trace> = positions.iter().map(|&i| self.traces[i].clone()).collect();
        Dataset::new(traces).expect("subset of a valid dataset stays valid")
    }
}

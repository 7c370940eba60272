//! Reduction of packet captures to canonical traces, plus JSONL dataset IO.

mod capture;
mod jsonl;
mod tcp;
mod tls;

pub use jsonl::{read_dataset, read_dataset_from, write_dataset, write_dataset_to};

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::path::Path;

use chrono::{SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{DnsEvent, Direction, Protocol, Trace, TraceError};

use capture::{ip_payload, read_capture};
use tcp::{parse_ip_packet, DirectedStream};
use tls::{scan_records, CONTENT_TYPE_APPLICATION_DATA};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable capture: {0}")]
    UnreadableCapture(String),
    #[error("no traffic matched the resolver spec")]
    NoMatchingTraffic,
    #[error("malformed TLS stream: {0}")]
    MalformedTls(String),
    #[error("bad resolver spec: {0}")]
    BadSpec(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Which endpoint counts as the resolver: a set of IPs and one port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolverSpec {
    pub resolver_id: String,
    pub ips: Vec<IpAddr>,
    pub port: u16,
    pub protocol: Protocol,
}

impl ResolverSpec {
    /// Builds a spec from textual IPs, e.g. `["8.8.8.8", "2001:4860:4860::8888"]`.
    pub fn new(
        resolver_id: &str,
        ips: &[&str],
        port: u16,
        protocol: Protocol,
    ) -> Result<ResolverSpec, IngestError> {
        if ips.is_empty() {
            return Err(IngestError::BadSpec("at least one IP is required".into()));
        }
        if port == 0 {
            return Err(IngestError::BadSpec("port must be 1..=65535".into()));
        }
        let ips = ips
            .iter()
            .map(|s| {
                s.parse::<IpAddr>()
                    .map_err(|e| IngestError::BadSpec(format!("bad IP {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ResolverSpec {
            resolver_id: resolver_id.to_string(),
            ips,
            port,
            protocol,
        })
    }

    fn matches(&self, endpoint: (IpAddr, u16)) -> bool {
        endpoint.1 == self.port && self.ips.contains(&endpoint.0)
    }
}

/// Per-flow reassembly state, keyed by the client endpoint (the resolver
/// side is fixed by the spec match).
#[derive(Default)]
struct Flow {
    c2r: DirectedStream,
    r2c: DirectedStream,
}

/// Reduces a capture file to one Trace: application-data TLS records on
/// flows to/from the resolver, timestamped by the segment carrying each
/// record's first header byte and rebased to the first matching record.
pub fn filter_capture(
    capture_path: &Path,
    spec: &ResolverSpec,
    label: &str,
    trace_id: &str,
) -> Result<Trace, IngestError> {
    let bytes = std::fs::read(capture_path)
        .map_err(|e| IngestError::UnreadableCapture(format!("{}: {e}", capture_path.display())))?;
    let packets = read_capture(&bytes).map_err(IngestError::UnreadableCapture)?;

    // Key: (client ip, client port, resolver ip, resolver port) as strings
    // for deterministic iteration.
    let mut flows: BTreeMap<(String, u16, String, u16), Flow> = BTreeMap::new();
    for (pkt_index, pkt) in packets.iter().enumerate() {
        let Some(ip) = ip_payload(pkt) else { continue };
        let Some(seg) = parse_ip_packet(pkt.ts_us, pkt_index, ip) else {
            continue;
        };
        let (client, to_resolver) = if spec.matches(seg.dst) {
            (seg.src, true)
        } else if spec.matches(seg.src) {
            (seg.dst, false)
        } else {
            continue;
        };
        let resolver = if to_resolver { seg.dst } else { seg.src };
        let key = (
            client.0.to_string(),
            client.1,
            resolver.0.to_string(),
            resolver.1,
        );
        let flow = flows.entry(key).or_default();
        let stream = if to_resolver {
            &mut flow.c2r
        } else {
            &mut flow.r2c
        };
        stream.push(&seg).map_err(IngestError::MalformedTls)?;
    }

    // (ts_us, pkt_index, header_offset) orders records; same-packet records
    // keep stream order via the header offset.
    let mut events: Vec<(u64, usize, usize, Direction, u32)> = Vec::new();
    for flow in flows.values() {
        for (stream, dir) in [
            (&flow.c2r, Direction::ClientToResolver),
            (&flow.r2c, Direction::ResolverToClient),
        ] {
            for rec in scan_records(&stream.bytes).map_err(IngestError::MalformedTls)? {
                if rec.content_type != CONTENT_TYPE_APPLICATION_DATA || rec.len == 0 {
                    continue;
                }
                let (ts_us, pkt_index) = stream.ts_at(rec.header_offset);
                events.push((ts_us, pkt_index, rec.header_offset, dir, u32::from(rec.len)));
            }
        }
    }
    if events.is_empty() {
        return Err(IngestError::NoMatchingTraffic);
    }
    events.sort_unstable_by_key(|&(ts, pkt, off, _, _)| (ts, pkt, off));

    let base_us = events[0].0;
    let collected_at = Utc
        .timestamp_micros(base_us as i64)
        .single()
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| "1970-01-01T00:00:00Z".to_string());
    let trace = Trace {
        trace_id: trace_id.to_string(),
        app: label.to_string(),
        resolver: spec.resolver_id.clone(),
        protocol: spec.protocol,
        collected_at,
        events: events
            .into_iter()
            .map(|(ts, _, _, dir, size)| DnsEvent {
                t_ms: (ts - base_us) / 1000,
                dir,
                size,
            })
            .collect(),
    };
    debug_assert!(crate::trace::validate_trace(&trace).is_empty());
    Ok(trace)
}

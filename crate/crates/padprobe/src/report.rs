//! Target lists in, audit reports out.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::Verdict;
use crate::probe::{HttpMethod, ProbeResult, ProbeTarget, DEFAULT_DOH_PORT, DEFAULT_DOT_PORT,
                   DEFAULT_TIMEOUT_MS};
use dnsfp::Protocol;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("target record {record}: {message}")]
    BadTarget { record: usize, message: String },
}

// One row of the target file; most columns may be left empty.
#[derive(Debug, Deserialize)]
struct TargetRow {
    resolver_id: String,
    protocol: String,
    host: String,
    port: Option<u16>,
    #[serde(default)]
    doh_url: String,
    #[serde(default)]
    method: String,
    #[serde(default)]
    tls_server_name: String,
    #[serde(default)]
    timeout_ms: Option<u64>,
    #[serde(default)]
    insecure: Option<bool>,
}

fn bad(record: usize, message: impl Into<String>) -> ReportError {
    ReportError::BadTarget {
        record,
        message: message.into(),
    }
}

/// Read probe targets from CSV with a header row. Required columns are
/// `resolver_id,protocol,host,port,doh_url,method`; `tls_server_name`,
/// `timeout_ms` and `insecure` may follow. Empty cells take defaults.
pub fn read_targets_csv(path: &Path) -> Result<Vec<ProbeTarget>, ReportError> {
    read_targets_from(std::fs::File::open(path)?)
}

pub fn read_targets_from<R: Read>(reader: R) -> Result<Vec<ProbeTarget>, ReportError> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut targets = Vec::new();
    for (i, row) in csv_reader.deserialize::<TargetRow>().enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| bad(record, e.to_string()))?;
        if row.resolver_id.is_empty() {
            return Err(bad(record, "resolver_id must not be empty"));
        }
        if row.host.is_empty() {
            return Err(bad(record, "host must not be empty"));
        }
        let protocol: Protocol = row
            .protocol
            .parse()
            .map_err(|e: dnsfp::trace::TraceError| bad(record, e.to_string()))?;
        let doh_url = match (protocol, row.doh_url.as_str()) {
            (Protocol::Doh, "") => return Err(bad(record, "doh targets need a doh_url")),
            (Protocol::Doh, url) => Some(url.to_string()),
            (Protocol::Dot, "") => None,
            (Protocol::Dot, _) => {
                return Err(bad(record, "dot targets must leave doh_url empty"))
            }
        };
        let method = if row.method.is_empty() {
            HttpMethod::Post
        } else {
            row.method.parse().map_err(|e: String| bad(record, e))?
        };
        targets.push(ProbeTarget {
            resolver_id: row.resolver_id,
            protocol,
            host: row.host,
            port: row.port.unwrap_or(match protocol {
                Protocol::Dot => DEFAULT_DOT_PORT,
                Protocol::Doh => DEFAULT_DOH_PORT,
            }),
            doh_url,
            method,
            tls_server_name: if row.tls_server_name.is_empty() {
                None
            } else {
                Some(row.tls_server_name)
            },
            timeout_ms: row.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS),
            insecure: row.insecure.unwrap_or(false),
        });
    }
    Ok(targets)
}

/// One verdict per row, with the response lengths that drove it.
pub fn write_report_csv<W: Write>(writer: W, results: &[ProbeResult]) -> Result<(), ReportError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record([
        "resolver_id",
        "protocol",
        "verdict",
        "queries",
        "valid_responses",
        "response_lengths",
        "diagnostic",
    ])?;
    for result in results {
        let lengths: Vec<String> = result
            .outcomes
            .iter()
            .filter_map(|o| o.response.as_ref())
            .map(|r| r.response_len.to_string())
            .collect();
        csv_writer.write_record([
            result.target.resolver_id.as_str(),
            result.target.protocol.as_str(),
            result.verdict.as_str(),
            &result.outcomes.len().to_string(),
            &lengths.len().to_string(),
            &lengths.join(";"),
            result.diagnostic.as_deref().unwrap_or(""),
        ])?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Full per-query detail, one JSON document.
pub fn write_report_json<W: Write>(writer: W, results: &[ProbeResult]) -> Result<(), ReportError> {
    let mut writer = writer;
    serde_json::to_writer_pretty(&mut writer, results)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Per-protocol verdict counts across an audit run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProtocolSummary {
    pub targets: usize,
    /// Targets that produced at least one valid DNS response.
    pub responders: usize,
    pub no_padding: usize,
    pub custom: usize,
    pub edns468: usize,
    pub invalid: usize,
}

impl ProtocolSummary {
    /// Share of responders with the given verdict; 0 when nobody answered.
    pub fn responder_fraction(&self, verdict: Verdict) -> f64 {
        let count = match verdict {
            Verdict::NoPadding => self.no_padding,
            Verdict::Custom => self.custom,
            Verdict::Edns468 => self.edns468,
            Verdict::Invalid => return 0.0,
        };
        if self.responders == 0 {
            0.0
        } else {
            count as f64 / self.responders as f64
        }
    }
}

pub fn summarize(results: &[ProbeResult]) -> BTreeMap<String, ProtocolSummary> {
    let mut summary: BTreeMap<String, ProtocolSummary> = BTreeMap::new();
    for result in results {
        let entry = summary
            .entry(result.target.protocol.as_str().to_string())
            .or_default();
        entry.targets += 1;
        match result.verdict {
            Verdict::NoPadding => {
                entry.responders += 1;
                entry.no_padding += 1;
            }
            Verdict::Custom => {
                entry.responders += 1;
                entry.custom += 1;
            }
            Verdict::Edns468 => {
                entry.responders += 1;
                entry.edns468 += 1;
            }
            Verdict::Invalid => entry.invalid += 1,
        }
    }
    summary
}

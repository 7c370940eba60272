//! JSONL dataset files: one trace object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::trace::{summarize_violations, validate_trace, Dataset, Trace};

use super::IngestError;

/// Reads a JSONL dataset, rejecting malformed lines (with their line
/// number), invalid traces, and duplicate trace ids.
pub fn read_dataset(path: &Path) -> Result<Dataset, IngestError> {
    read_dataset_from(BufReader::new(File::open(path)?))
}

pub fn read_dataset_from<R: BufRead>(reader: R) -> Result<Dataset, IngestError> {
    let mut traces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let trace: Trace = serde_json::from_str(trimmed).map_err(|e| IngestError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let violations = validate_trace(&trace);
        if !violations.is_empty() {
            return Err(IngestError::Parse {
                line: i + 1,
                message: summarize_violations(&violations),
            });
        }
        traces.push(trace);
    }
    // Dataset construction re-checks validity and catches duplicate ids.
    Ok(Dataset::new(traces)?)
}

/// Writes a dataset as JSONL, one trace per line, in dataset order.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), IngestError> {
    write_dataset_to(BufWriter::new(File::create(path)?), ds)
}

pub fn write_dataset_to<W: Write>(mut writer: W, ds: &Dataset) -> Result<(), IngestError> {
    for trace in ds.traces() {
        serde_json::to_writer(&mut writer, trace)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

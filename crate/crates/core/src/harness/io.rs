//! JSON specs and reports, CSV per-cell tables.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ExperimentReport, ExperimentSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "n",
    "epsilon",
    "runs",
    "successRate",
    "wilsonLo",
    "wilsonHi",
    "meanRounds",
    "meanMessages",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialisation failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Field named in a serde message such as "unknown field `foo`" or "missing field `bar`".
fn field_of(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    let message = e.to_string();
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        field: field_of(&message),
        message,
    }
}

fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    match value.get("schemaVersion") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => {
            return Err(Error::SchemaVersion {
                path: path.to_path_buf(),
                found: v.to_string(),
                expected: SCHEMA_VERSION,
            })
        }
        None => {
            return Err(Error::SchemaVersion {
                path: path.to_path_buf(),
                found: "none".into(),
                expected: SCHEMA_VERSION,
            })
        }
    }
    // Second pass on the text keeps line/column context in errors.
    serde_json::from_str(&text).map_err(|e| parse_error(path, e))
}

/// Loads and validates a spec.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = read_versioned(path)?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_spec(spec: &ExperimentSpec, path: &Path) -> Result<()> {
    write_json(spec, path)
}

/// Refuses reports without cells.
pub fn save_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    if report.per_cell.is_empty() {
        return Err(Error::EmptyReport);
    }
    write_json(report, path)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    read_versioned(path)
}

/// Per-cell table. Floats use shortest round-trip formatting, as in the JSON.
pub fn write_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    if report.per_cell.is_empty() {
        return Err(Error::EmptyReport);
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for c in &report.per_cell {
        w.write_record([
            c.n.to_string(),
            c.epsilon.to_string(),
            c.runs.to_string(),
            c.success_rate.to_string(),
            c.wilson_lo.to_string(),
            c.wilson_hi.to_string(),
            c.mean_rounds.to_string(),
            c.mean_messages.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

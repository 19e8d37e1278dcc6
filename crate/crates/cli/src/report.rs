use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    /// Passes when `lo <= value <= hi`; `threshold` records `hi`.
    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: hi,
            passed: (lo..=hi).contains(&value),
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub kind: String,
    pub config: Value,
    pub wall_clock_seconds: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub result: Value,
}

impl Report {
    pub fn new(kind: &str, config: impl Serialize, checks: Vec<Check>, result: impl Serialize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            kind: kind.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            wall_clock_seconds: 0.0,
            passed: checks.iter().all(|c| c.passed),
            checks,
            result: serde_json::to_value(result).expect("result serializes"),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)?;
    Ok(text)
}

/// Writes rows of a serializable type with a header taken from its fields.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf, CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

//! Reports, tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SCHEMA: &str = "1";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<String, CliError> {
        let file = format!("{}.csv", self.name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(&self.header).map_err(|e| io_err(&path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(file)
    }
}

/// Two whitespace-separated columns, for gnuplot.
pub fn write_dat(dir: &Path, name: &str, rows: &[(f64, f64)]) -> Result<String, CliError> {
    let file = format!("{name}.dat");
    let path = dir.join(&file);
    let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    for (x, y) in rows {
        writeln!(f, "{x} {y}").map_err(|e| io_err(&path, e))?;
    }
    Ok(file)
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub load_ms: f64,
    pub run_ms: f64,
    pub write_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub config: Option<Value>,
    pub versions: Value,
    pub timings: Timings,
    pub artifacts: Vec<String>,
    pub failures: Vec<String>,
    pub error: Option<ErrorRecord>,
}

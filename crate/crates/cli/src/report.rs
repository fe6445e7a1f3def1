//! Tabular reports, their CSV/JSON encodings and the run manifest.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::data::{sha256_hex, DatasetDescriptor};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

// Shortest representation that parses back to the same f64, so CSV
// tables round-trip bit-exactly.
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) if v.is_nan() => f.write_str("NaN"),
            Cell::Num(v) if v.is_infinite() => f.write_str(if *v > 0.0 { "inf" } else { "-inf" }),
            Cell::Num(v) if v.fract() == 0.0 && v.abs() < 1e15 => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v:?}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Empty => Ok(()),
        }
    }
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) if v.is_nan() => Value::Null,
            Cell::Num(v) => json!(if *v > 0.0 { "inf" } else { "-inf" }),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> =
                        self.columns.iter().cloned().zip(row.iter().map(Cell::to_json)).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub tables: Vec<Table>,
    pub summary: Value,
    pub warnings: Vec<String>,
    /// Per-item failures the command recovered from.
    pub errors: Vec<String>,
    pub nonconverged: usize,
    pub inputs: Vec<DatasetDescriptor>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            tables: Vec::new(),
            summary: Value::Object(Map::new()),
            warnings: Vec::new(),
            errors: Vec::new(),
            nonconverged: 0,
            inputs: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub options: Value,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<DatasetDescriptor>,
    pub outputs: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(report: &Report, options: Value, seed: u64) -> Self {
        Self {
            command: report.command.clone(),
            options,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: report.inputs.clone(),
            outputs: Vec::new(),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<FileRecord> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(FileRecord { path: path.display().to_string(), sha256: sha256_hex(contents.as_bytes()) })
}

/// Writes every table and the summary into `dir`, followed by
/// `<command>.manifest.json` listing them with their checksums.
pub fn write_dir(report: &Report, dir: &Path, format: Format, mut manifest: RunManifest) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for t in &report.tables {
        let (ext, body) = match format {
            Format::Csv => ("csv", t.to_csv()?),
            Format::Json => ("json", serde_json::to_string_pretty(&t.to_json())? + "\n"),
        };
        let path = dir.join(format!("{}.{ext}", t.name));
        manifest.outputs.push(write_file(&path, &body)?);
        written.push(path);
    }
    let summary = json!({
        "command": report.command,
        "summary": report.summary,
        "warnings": report.warnings,
        "errors": report.errors,
        "nonconverged": report.nonconverged,
    });
    let path = dir.join(format!("{}_summary.json", report.command));
    manifest
        .outputs
        .push(write_file(&path, &(serde_json::to_string_pretty(&summary)? + "\n"))?);
    written.push(path);
    let path = dir.join(format!("{}.manifest.json", report.command));
    write_file(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    written.push(path);
    Ok(written)
}

/// CSV mode prints the tables (a `# name` line separates several);
/// JSON mode prints one document holding tables, summary and manifest.
pub fn write_stdout(report: &Report, format: Format, manifest: RunManifest, out: &mut impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let many = report.tables.len() > 1;
            for (k, t) in report.tables.iter().enumerate() {
                if many {
                    if k > 0 {
                        writeln!(out)?;
                    }
                    writeln!(out, "# {}", t.name)?;
                }
                out.write_all(t.to_csv()?.as_bytes())?;
            }
        }
        Format::Json => {
            let tables: Map<String, Value> = report.tables.iter().map(|t| (t.name.clone(), t.to_json())).collect();
            let doc = json!({
                "command": report.command,
                "tables": tables,
                "summary": report.summary,
                "warnings": report.warnings,
                "errors": report.errors,
                "nonconverged": report.nonconverged,
                "manifest": manifest,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let vals = [0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 123456789.12345679, 1e-15, 3.0, 6.02e23];
        let mut t = Table::new("x", &["v"]);
        for v in vals {
            t.push(vec![v.into()]);
        }
        let text = t.to_csv().unwrap();
        let back: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        assert_eq!(back, vals);
    }

    #[test]
    fn json_nulls_nan() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![f64::NAN.into(), "z".into()]);
        assert_eq!(t.to_json(), json!([{"a": null, "b": "z"}]));
    }
}

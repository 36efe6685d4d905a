use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rust_decimal::Decimal;
use serde_json::{Map, Value};
use slideprov_core::record::canonical_json;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i128),
    Float(f64),
    Dec(Decimal),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn csv_text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => float_text(*v),
            Cell::Dec(v) => v.normalize().to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Bool(v) => v.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => i64::try_from(*v).map_or_else(|_| Value::String(v.to_string()), Value::from),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            // exact decimals travel as strings
            Cell::Dec(v) => Value::String(v.normalize().to_string()),
            Cell::Text(v) => Value::String(v.clone()),
            Cell::Bool(v) => Value::Bool(*v),
        }
    }
}

/// Shortest round-trip form; integral values keep one decimal place.
pub fn float_text(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    serde_json::Number::from_f64(v).map_or_else(|| v.to_string(), |n| n.to_string())
}

macro_rules! cell_from {
    ($($t:ty => $variant:ident via $conv:expr),* $(,)?) => {
        $(impl From<$t> for Cell {
            fn from(v: $t) -> Self {
                Cell::$variant($conv(v))
            }
        })*
    };
}

cell_from! {
    u64 => Int via i128::from,
    i64 => Int via i128::from,
    usize => Int via |v: usize| v as i128,
    u128 => Int via |v: u128| v as i128,
    f64 => Float via |v| v,
    Decimal => Dec via |v| v,
    String => Text via |v| v,
    &str => Text via str::to_string,
    bool => Bool via |v| v,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, headers: &[&str]) -> Self {
        Self {
            name,
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_headers(name: &'static str, headers: Vec<String>) -> Self {
        Self {
            name,
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_text)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    fn to_json(&self) -> Vec<u8> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self.headers.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                Value::Object(obj)
            })
            .collect();
        json_bytes(&Value::Array(rows))
    }

    /// Writes `<out>/<name>.csv` or `<out>/<name>.json`.
    pub fn write(&self, out: &Path, format: Format) -> Result<PathBuf, CliError> {
        let (ext, bytes) = match format {
            Format::Csv => ("csv", self.to_csv()),
            Format::Json => ("json", self.to_json()),
        };
        let path = out.join(format!("{}.{ext}", self.name));
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

/// Canonical JSON plus a trailing newline.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut b = canonical_json(v);
    b.push(b'\n');
    b
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::io(path, e);
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

//! Deterministic JSON and CSV emission.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so identical runs give identical bytes.
//! Non-finite values become `null` in JSON and empty cells in CSV.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use dfsq::protocols::ProtocolResult;

use crate::config::Format;
use crate::error::{CliError, CliResult};

/// Version stamped into every output file.
pub const SCHEMA_VERSION: u32 = 1;

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with fixed-width scientific floats.
struct FixedFormatter(PrettyFormatter<'static>);

impl Formatter for FixedFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory JSON serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// A table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Number(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::Empty, Self::Number)
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Self::Number(v) if v.is_finite() => format_float(*v),
            Self::Number(_) | Self::Empty => String::new(),
            Self::Text(s) => s.clone(),
        }
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// `time` followed by every series in name order.
    pub fn from_protocol(result: &ProtocolResult) -> Self {
        let mut columns = vec!["time".to_owned()];
        columns.extend(result.series.keys().cloned());
        let rows = result
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut row = vec![Cell::Number(t)];
                row.extend(result.series.values().map(|s| Cell::Number(s[i])));
                row
            })
            .collect();
        Self { columns, rows }
    }

    fn render(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// One output file pair: `<stem>.json` and `<stem>.csv`.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub stem: String,
    pub command: String,
    /// Command-specific JSON payload, merged next to the stamp and config.
    pub body: serde_json::Map<String, Value>,
    pub table: Table,
}

impl Artifact {
    pub fn new(stem: &str, command: &str, table: Table) -> Self {
        Self {
            stem: stem.to_owned(),
            command: command.to_owned(),
            body: serde_json::Map::new(),
            table,
        }
    }

    pub fn with<T: Serialize>(mut self, key: &str, value: &T) -> Self {
        self.body.insert(key.to_owned(), serde_json::to_value(value).expect("serializable payload"));
        self
    }

    pub fn from_protocol(stem: &str, command: &str, result: &ProtocolResult) -> Self {
        Self::new(stem, command, Table::from_protocol(result)).with("result", result)
    }

    pub fn json(&self, config: &Value) -> String {
        let mut doc = serde_json::Map::new();
        doc.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        doc.insert("command".into(), Value::from(self.command.clone()));
        doc.insert("config".into(), config.clone());
        for (k, v) in &self.body {
            doc.insert(k.clone(), v.clone());
        }
        to_json_string(&Value::Object(doc))
    }

    pub fn csv(&self, config: &Value) -> String {
        let comments = vec![
            format!("schema_version={SCHEMA_VERSION}"),
            format!("command={}", self.command),
            format!("config={}", serde_json::to_string(config).expect("config is serializable")),
        ];
        self.table.render(&comments)
    }

    /// Write the requested formats into `dir`, returning the paths written.
    pub fn write(&self, dir: &Path, format: Format, config: &Value) -> CliResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut emit = |ext: &str, text: String| -> CliResult<()> {
            let path = dir.join(format!("{}.{ext}", self.stem));
            fs::write(&path, text).map_err(|source| CliError::Write { path: path.clone(), source })?;
            written.push(path);
            Ok(())
        };
        if format.json() {
            emit("json", self.json(config))?;
        }
        if format.csv() {
            emit("csv", self.csv(config))?;
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-359.0), "-3.5900000000000000e2");
    }

    #[test]
    fn non_finite_json_is_null() {
        let s = to_json_string(&vec![1.0, f64::NAN, f64::INFINITY]);
        assert!(s.contains("null"));
        assert!(s.contains("1.0000000000000000e0"));
    }

    #[test]
    fn csv_has_comments_header_and_empty_nan() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::Number(1.0), Cell::Number(f64::NAN)]);
        let a = Artifact::new("x", "test", t);
        let csv = a.csv(&Value::Null);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# schema_version=1");
        assert_eq!(lines[3], "a,b");
        assert_eq!(lines[4], "1.0000000000000000e0,");
    }
}

//! Delimited-text data and chain files, and the key-value summary.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Writes `header` and rows of an integer index followed by floats printed
/// with 17 significant digits.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = (usize, Vec<f64>)>) -> CliResult<()> {
    let io = |e: csv::Error| CliError::io(format!("writing {}", path.display()), e.into());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in rows {
        record.clear();
        record.push(i.to_string());
        record.extend(row.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&record).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// A numeric table: header, integer first column and float columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub index: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j - 1]).collect())
    }
}

/// Reads a table written by [`write_table`]. `bad` builds the error for
/// malformed content.
pub fn read_table(path: &Path, bad: fn(String) -> CliError) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let where_ = |msg: String| bad(format!("{}: {msg}", path.display()));
    let header: Vec<String> = r
        .headers()
        .map_err(|e| where_(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(where_("expected an index column and at least one value column".into()));
    }
    let mut index = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| where_(e.to_string()))?;
        let i = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| where_(format!("row {}: bad index '{}'", line + 1, &rec[0])))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| where_(format!("row {}: non-numeric value", line + 1)))?;
        index.push(i);
        rows.push(vals);
    }
    Ok(Table { header, index, rows })
}

/// Observation file: `t,y1..yk` with `t = 1..n`.
pub fn write_data(path: &Path, data: &[Vec<f64>]) -> CliResult<()> {
    let k = data.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|j| format!("y{j}")));
    write_table(path, &header, data.iter().enumerate().map(|(t, y)| (t + 1, y.clone())))
}

pub fn read_data(path: &Path, obs_dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let t = read_table(path, CliError::Config)?;
    if t.header.len() != obs_dim + 1 {
        return Err(CliError::Config(format!(
            "{}: expected {obs_dim} observed components, found {}",
            path.display(),
            t.header.len() - 1
        )));
    }
    if t.index.iter().enumerate().any(|(i, &ti)| ti != i + 1) || t.rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: times must run 1, 2, ..., n",
            path.display()
        )));
    }
    Ok(t.rows)
}

/// Ordered `key = value` lines with values in TOML syntax.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub lines: Vec<(String, toml::Value)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<toml::Value>) {
        self.lines.push((key.into(), value.into()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut f = File::create(path).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        f.write_all(self.render().as_bytes())
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

/// Parses a summary file into nested tables (dotted keys nest).
pub fn read_summary(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::CorruptArchive(format!("{}: {e}", path.display())))
}

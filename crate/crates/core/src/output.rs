//! CSV tables with `#` metadata headers, and JSON envelopes.
//!
//! Numbers are written as `{:.16e}`, i.e. 17 significant digits, which
//! round-trips every `f64`. Output is a pure function of the table contents,
//! so identical inputs give byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};
use crate::trajectory::Trajectory;

/// Version of the CSV and JSON layouts written by this module.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
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

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Full-precision scientific notation.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            metadata: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let v = v.replace('\n', " ");
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv encoding failed: {e}"));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv encoding failed: {e}")))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}

/// Parses a table written by [`CsvTable::to_csv_string`]; every cell is
/// returned as text.
pub fn read_csv(text: &str) -> Result<(Vec<(String, String)>, Vec<String>, Vec<Vec<String>>)> {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once(": ") {
                meta.push((k.to_string(), v.to_string()));
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv decoding failed: {e}"));
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((meta, header, rows))
}

/// One row per grid point: `t_over_Gamma`, optionally `t_ns`, then
/// `coherence_abs`, `phase_rad_unwrapped` and `population` of every record
/// (suffixed with `_site{l}` for chain sites).
pub fn trajectory_table<T: Real>(traj: &Trajectory<T>, ns_per_inverse_gamma: Option<f64>) -> Result<CsvTable> {
    traj.validate()?;
    let mut columns = vec!["t_over_Gamma".to_string()];
    if ns_per_inverse_gamma.is_some() {
        columns.push("t_ns".into());
    }
    for r in &traj.records {
        let l = r.label();
        columns.push(format!("coherence_abs{l}"));
        columns.push(format!("phase_rad_unwrapped{l}"));
        columns.push(format!("population{l}"));
    }
    let mut table = CsvTable::new(columns);
    for (k, &t) in traj.times.iter().enumerate() {
        let t = to_f64(t);
        let mut row = vec![Cell::Num(t)];
        if let Some(f) = ns_per_inverse_gamma {
            row.push(Cell::Num(t * f));
        }
        for r in &traj.records {
            row.push(Cell::Num(to_f64(r.coherence_abs[k])));
            row.push(Cell::Num(to_f64(r.phase[k])));
            row.push(Cell::Num(to_f64(r.population[k])));
        }
        table.push_row(row)?;
    }
    Ok(table)
}

/// `{"schema_version", "kind", "metadata", "data"}` wrapper for JSON output.
pub fn json_envelope(
    kind: &str,
    metadata: &BTreeMap<String, serde_json::Value>,
    data: impl Serialize,
) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "metadata": metadata,
        "data": serde_json::to_value(data)?,
    }))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

use clap::{Args, ValueEnum};
use serde_json::Value;
use std::path::PathBuf;
use std::str::FromStr;

use crate::config::ConfigFile;
use crate::error::CliError;

/// Rendered in place of undefined metric values.
pub const NOT_AVAILABLE: &str = "n/a";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report format [default: json]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Report destination [default: stdout]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub const REPORT_KEYS: [&str; 2] = ["format", "report"];

impl ReportArgs {
    pub fn resolve(&self, file: &ConfigFile) -> Result<(Format, Option<PathBuf>), CliError> {
        Ok((
            file.pick_or(self.format, "format", Format::Json)?,
            file.pick(self.report.clone(), "report")?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(usize),
    Missing,
}

impl Cell {
    pub fn maybe(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Num(v) => Value::from(*v),
            Cell::Int(v) => Value::from(*v),
            Cell::Missing => Value::from(NOT_AVAILABLE),
        }
    }

    fn to_field(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Missing => NOT_AVAILABLE.to_string(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

/// Rows under a fixed header. CSV renders it directly; JSON renders an array
/// of objects keyed by the header.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.header
                            .iter()
                            .zip(r)
                            .map(|(h, c)| (h.to_string(), c.to_json()))
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::to_field))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// JSON renders `json`; CSV renders `table`.
pub fn render(format: Format, json: &Value, table: &Table) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(json).expect("JSON values serialize");
            s.push(b'\n');
            s
        }
        Format::Csv => table.to_csv(),
    }
}

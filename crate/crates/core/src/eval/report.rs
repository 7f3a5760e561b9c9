use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    /// Undefined value; an empty CSV field and `null` in JSON.
    Missing,
}

impl Cell {
    /// Non-finite numbers become `Missing`.
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Missing
        }
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::num)
    }

    pub fn int(x: usize) -> Self {
        Cell::Int(x as i64)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(i) => Some(i as f64),
            Cell::Num(x) => Some(x),
            _ => None,
        }
    }
}

/// A table plus free-form notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl Report {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Shape(format!("row of {} cells for {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.into(), value.to_string());
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Header row then one line per row; floats with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let escape = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        out.push_str(&self.columns.iter().map(|c| escape(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Int(v) => write!(out, "{v}").unwrap(),
                    Cell::Num(v) => write!(out, "{v:.6}").unwrap(),
                    Cell::Text(s) => out.push_str(&escape(s)),
                    Cell::Missing => {}
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }
}

pub fn emit_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fuzz_report(rows: usize) -> Report {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = Report::new("fuzz", &["name", "count", "value", "maybe"]);
        for i in 0..rows {
            let v: f64 = rng.random_range(-1e6..1e6);
            let maybe = if rng.random_bool(0.2) { Cell::Missing } else { Cell::num(rng.random::<f64>()) };
            r.push(vec![Cell::Text(format!("row, {i}")), Cell::int(i), Cell::num(v), maybe]).unwrap();
        }
        r.note("seed", 3);
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = Report::new("sweep", &["n_frames", "mae_s"]);
        assert_eq!(r.to_csv(), "n_frames,mae_s\n");
    }

    #[test]
    fn json_round_trip() {
        let r = fuzz_report(100);
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
        assert!(Report::from_json("{}").is_err());
    }

    #[test]
    fn csv_numbers_parse() {
        let r = fuzz_report(100);
        let csv = r.to_csv();
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let mut n = 0;
        for rec in reader.records() {
            let rec = rec.unwrap();
            assert_eq!(rec.len(), 4);
            let value: f64 = rec[2].parse().unwrap();
            assert!(value.is_finite());
            let decimals = rec[2].split('.').nth(1).unwrap();
            assert_eq!(decimals.len(), 6);
            assert!(rec[1].parse::<i64>().is_ok());
            assert!(rec[3].is_empty() || rec[3].parse::<f64>().unwrap().is_finite());
            n += 1;
        }
        assert_eq!(n, 100);
    }

    #[test]
    fn rows_must_fit_columns() {
        let mut r = Report::new("x", &["a"]);
        assert!(r.push(vec![Cell::int(1), Cell::int(2)]).is_err());
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path().join("r.csv"), ReportFormat::Csv).unwrap();
        assert!(emit_report(&r, dir.path().join("missing/r.csv"), ReportFormat::Json).is_err());
    }
}

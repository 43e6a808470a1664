use std::io::{Read, Write};

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One table cell. Non-finite numbers travel through JSON as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Cell {
    Num(f64),
    Text(String),
    #[default]
    Empty,
}

impl Cell {
    pub fn num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => nonfinite_name(*v).to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    /// Bitwise equality for numbers (so that NaN cells compare equal to themselves).
    pub fn same(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits(),
            _ => self == other,
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
        Cell::Num(v as f64)
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

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

fn nonfinite_name(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Num(v) if v.is_finite() => s.serialize_f64(*v),
            Cell::Num(v) => s.serialize_str(nonfinite_name(*v)),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Empty => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CellVisitor;
        impl<'de> Visitor<'de> for CellVisitor {
            type Value = Cell;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number, a string or null")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Cell, E> {
                Ok(Cell::Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Cell, E> {
                Ok(Cell::Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Cell, E> {
                Ok(Cell::Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Cell, E> {
                Ok(match v {
                    "inf" => Cell::Num(f64::INFINITY),
                    "-inf" => Cell::Num(f64::NEG_INFINITY),
                    "nan" => Cell::Num(f64::NAN),
                    _ => Cell::Text(v.to_string()),
                })
            }
            fn visit_unit<E: de::Error>(self) -> std::result::Result<Cell, E> {
                Ok(Cell::Empty)
            }
            fn visit_none<E: de::Error>(self) -> std::result::Result<Cell, E> {
                Ok(Cell::Empty)
            }
        }
        d.deserialize_any(CellVisitor)
    }
}

/// A grid point: either a complete row or the grid cells plus a failure message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Least-squares slope of `log y` against `log x` for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub label: String,
    pub x: String,
    pub y: String,
    pub slope: f64,
    pub residual: f64,
    pub points: usize,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: String,
    pub grid_points: usize,
    pub failures: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub rates: Vec<RateFit>,
    pub metadata: ReportMetadata,
}

impl ExperimentReport {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            rates: Vec::new(),
            metadata: ReportMetadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                grid_points: 0,
                failures: 0,
                notes: Vec::new(),
            },
        }
    }

    /// Appends a row; missing trailing cells are filled with `Empty`.
    pub fn push(&mut self, mut cells: Vec<Cell>, failure: Option<String>) {
        assert!(cells.len() <= self.columns.len(), "row wider than the report");
        cells.resize(self.columns.len(), Cell::Empty);
        self.metadata.grid_points += 1;
        if failure.is_some() {
            self.metadata.failures += 1;
        }
        self.rows.push(ReportRow { cells, failure });
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, name: &str) -> Option<&Cell> {
        self.column(name).and_then(|c| self.rows.get(row).map(|r| &r.cells[c]))
    }

    pub fn num(&self, row: usize, name: &str) -> Option<f64> {
        self.cell(row, name).and_then(Cell::num)
    }

    /// Indices of the successful rows whose `column` equals `value`.
    pub fn rows_where(&self, column: &str, value: &str) -> Vec<usize> {
        let Some(c) = self.column(column) else {
            return Vec::new();
        };
        (0..self.rows.len())
            .filter(|&i| self.rows[i].failure.is_none() && self.rows[i].cells[c].text() == Some(value))
            .collect()
    }

    /// `(x, y)` pairs of the given rows, skipping rows where either is missing.
    pub fn series(&self, rows: &[usize], x: &str, y: &str) -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|&i| Some((self.num(i, x)?, self.num(i, y)?)))
            .collect()
    }

    pub fn rate(&self, label: &str) -> Option<&RateFit> {
        self.rates.iter().find(|r| r.label == label)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }

    pub fn has_failures(&self) -> bool {
        self.metadata.failures > 0
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.metadata.notes.push(note.into());
    }

    /// Fits `y` against `x` on the given rows and records the result. Series with
    /// fewer than three usable points are noted and skipped.
    pub fn add_fit(&mut self, label: &str, rows: &[usize], x: &str, y: &str, window: Option<(f64, f64)>) {
        let pts = self.series(rows, x, y);
        match super::fit_loglog_rate(&pts, window) {
            Ok(fit) => self.rates.push(RateFit {
                label: label.to_string(),
                x: x.to_string(),
                y: y.to_string(),
                slope: fit.slope,
                residual: fit.residual,
                points: fit.points,
                unreliable: fit.residual > super::UNRELIABLE_RESIDUAL,
            }),
            Err(e) => self.note(format!("no fit for {label}: {e}")),
        }
    }

    /// One header line, then one line per grid point; floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns).map_err(csv_error)?;
        for row in &self.rows {
            out.write_record(row.cells.iter().map(Cell::csv)).map_err(csv_error)?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Equality that treats numeric cells bitwise.
    pub fn same(&self, other: &ExperimentReport) -> bool {
        self.experiment == other.experiment
            && self.columns == other.columns
            && self.metadata == other.metadata
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.failure == b.failure
                    && a.cells.len() == b.cells.len()
                    && a.cells.iter().zip(&b.cells).all(|(x, y)| x.same(y))
            })
            && self.rates.len() == other.rates.len()
            && self.rates.iter().zip(&other.rates).all(|(a, b)| {
                a.label == b.label
                    && a.slope.to_bits() == b.slope.to_bits()
                    && a.residual.to_bits() == b.residual.to_bits()
                    && a.points == b.points
            })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::new("demo", &["case", "h", "value"]);
        for (i, v) in [0.1, 1.0 / 3.0, f64::INFINITY].into_iter().enumerate() {
            r.push(vec!["a".into(), (0.5f64.powi(i as i32)).into(), v.into()], None);
        }
        r.push(vec!["b".into(), 0.125.into()], Some("solver failed".into()));
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = ExperimentReport::new("empty", &["h", "delta_volume", "ratio", "function_id"]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "h,delta_volume,ratio,function_id\n");
    }

    #[test]
    fn csv_rows_and_precision() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "a,5.0000000000000000e-1,3.3333333333333331e-1");
        assert!(lines[3].ends_with(",inf"));
        assert_eq!(lines[4], "b,1.2500000000000000e-1,");
        let back: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(back.to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let mut r = sample();
        r.rates.push(RateFit {
            label: "a".into(),
            x: "h".into(),
            y: "value".into(),
            slope: 0.1 + 0.2,
            residual: 1e-300,
            points: 3,
            unreliable: false,
        });
        r.push(vec!["c".into(), f64::NAN.into(), f64::NEG_INFINITY.into()], None);
        let mut buf = Vec::new();
        r.write_json(&mut buf).unwrap();
        let back = ExperimentReport::read_json(buf.as_slice()).unwrap();
        assert!(back.same(&r));
        assert_eq!(back.metadata.failures, 1);
        assert_eq!(back.rows[3].failure.as_deref(), Some("solver failed"));
    }

    #[test]
    fn lookups() {
        let r = sample();
        assert_eq!(r.rows_where("case", "a"), vec![0, 1, 2]);
        assert!(r.rows_where("case", "b").is_empty());
        assert_eq!(r.series(&[0, 1], "h", "value"), vec![(1.0, 0.1), (0.5, 1.0 / 3.0)]);
        assert_eq!(r.metadata.grid_points, 4);
        assert!(r.has_failures());
    }
}

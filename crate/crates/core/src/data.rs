//! Price CSV ingestion and simple-return computation.
//!
//! Input layout: a header `Date,SYM1,...`, ISO-8601 dates, decimal prices,
//! empty cells for missing prices.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::portfolio::{PortfolioError, ReturnsMatrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column {column}: {message}")]
    Parse {
        /// 1-based line number, the header being line 1.
        row: usize,
        column: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Date-indexed adjusted close prices, one optional value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFrame {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    /// Column-major: `columns[j][i]` is the price of symbol `j` on date `i`.
    columns: Vec<Vec<Option<f64>>>,
}

impl PriceFrame {
    pub fn new(
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, DataError> {
        if dates.len() < 2 {
            return Err(DataError::Invalid(format!(
                "need at least 2 dated rows, found {}",
                dates.len()
            )));
        }
        if symbols.is_empty() {
            return Err(DataError::Invalid("no price columns".into()));
        }
        if columns.len() != symbols.len() || columns.iter().any(|c| c.len() != dates.len()) {
            return Err(DataError::Invalid(
                "price columns do not match dates and symbols".into(),
            ));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(DataError::Invalid(format!(
                    "empty symbol in column {}",
                    i + 2
                )));
            }
            if symbols[..i].contains(s) {
                return Err(DataError::Invalid(format!("duplicate symbol {s}")));
            }
        }
        for w in dates.windows(2) {
            if w[0] == w[1] {
                return Err(DataError::Invalid(format!("duplicate date {}", w[1])));
            }
            if w[0] > w[1] {
                return Err(DataError::Invalid(format!(
                    "dates not increasing: {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self {
            dates,
            symbols,
            columns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn column(&self, symbol: &str) -> Option<&[Option<f64>]> {
        let j = self.symbols.iter().position(|s| s == symbol)?;
        Some(&self.columns[j])
    }

    pub fn num_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn missing_cells(&self) -> usize {
        self.columns
            .iter()
            .flatten()
            .filter(|v| v.is_none())
            .count()
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().or_else(|| {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
            .ok()
            .map(|d| d.date())
    })
}

/// Parses price CSV text. Dates must be strictly increasing.
pub fn parse_prices<R: Read>(reader: R) -> Result<PriceFrame, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            row: 1,
            column: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 {
        return Err(DataError::Parse {
            row: 1,
            column: "header".into(),
            message: "expected a date column followed by at least one symbol".into(),
        });
    }
    let symbols: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); symbols.len()];
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| DataError::Parse {
            row,
            column: "record".into(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(DataError::Parse {
                row,
                column: "record".into(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let date = parse_date(&record[0]).ok_or_else(|| DataError::Parse {
            row,
            column: header[0].to_string(),
            message: format!("unparseable date {:?}", &record[0]),
        })?;
        if let Some(&prev) = dates.last() {
            if date <= prev {
                let what = if date == prev {
                    "duplicate"
                } else {
                    "decreasing"
                };
                return Err(DataError::Parse {
                    row,
                    column: header[0].to_string(),
                    message: format!("{what} date {date} after {prev}"),
                });
            }
        }
        dates.push(date);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                    row,
                    column: symbols[j].clone(),
                    message: format!("unparseable number {cell:?}"),
                })?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(DataError::Parse {
                        row,
                        column: symbols[j].clone(),
                        message: format!("price must be positive and finite, got {cell}"),
                    });
                }
                Some(v)
            };
            columns[j].push(value);
        }
    }
    PriceFrame::new(dates, symbols, columns)
}

pub fn load_prices(path: &Path) -> Result<PriceFrame, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_prices(file)
}

/// Simple returns per column. Missing prices are skipped before
/// differencing, so a return spans any gap; dates without a defined return
/// (missing cells and each column's first valid price) get 0.
pub fn compute_returns(frame: &PriceFrame) -> Result<ReturnsMatrix, DataError> {
    let n = frame.num_rows();
    let m = frame.symbols.len();
    let mut values = DMatrix::zeros(n, m);
    for (j, col) in frame.columns.iter().enumerate() {
        let valid = col.iter().filter(|v| v.is_some()).count();
        if valid < 2 {
            return Err(DataError::Invalid(format!(
                "symbol {} has {valid} valid prices, need at least 2",
                frame.symbols[j]
            )));
        }
        let mut prev: Option<f64> = None;
        for (i, cell) in col.iter().enumerate() {
            if let Some(p) = *cell {
                if let Some(q) = prev {
                    values[(i, j)] = (p - q) / q;
                }
                prev = Some(p);
            }
        }
    }
    ReturnsMatrix::new(values, frame.dates.clone(), frame.symbols.clone()).map_err(|e| match e {
        PortfolioError::Invalid(msg) => DataError::Invalid(msg),
        other => DataError::Invalid(other.to_string()),
    })
}

//! Raw tabular data: the untransformed rows a dataset file parses into and
//! that generation writes back out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cell of a raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Real(f64),
    Cat(String),
}

impl Cell {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Cell::Real(_) => None,
            Cell::Cat(s) => Some(s),
        }
    }

    /// Stable textual form used for CSV output and duplicate detection.
    pub fn render(&self) -> String {
        match self {
            // ryu-style shortest form round-trips f64 exactly
            Cell::Real(v) => {
                let mut buf = ryu_format(*v);
                if buf.ends_with(".0") {
                    buf.truncate(buf.len() - 2);
                }
                buf
            }
            Cell::Cat(s) => s.clone(),
        }
    }
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; format! {:?} on f64 gives the same
    // shortest round-trip representation on modern rustc.
    format!("{v:?}")
}

/// A raw table with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl RawTable {
    pub fn new(columns: Vec<String>) -> Self {
        RawTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Schema(format!(
                "row width {} does not match {} declared columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of one column as reals; errors on the first categorical cell.
    pub fn real_column(&self, col: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                r[col].as_real().ok_or_else(|| {
                    Error::Data(format!("column {} holds non-numeric data", self.columns[col]))
                })
            })
            .collect()
    }
}

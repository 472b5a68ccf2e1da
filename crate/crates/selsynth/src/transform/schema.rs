//! Column declarations and fitted schemas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, RawTable};
use crate::transform::gmm::{fit_mode_model, ModeModel, MAX_MODES};

/// Declared role of a column, before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Continuous,
    Ordinal,
    Nominal,
}

/// A user-authored column declaration: name, role, and (for categoricals)
/// the category list (ordered, for ordinals).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default)]
    pub categories: Vec<String>,
}

/// Fitted per-column state. Exactly one payload per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedKind {
    Continuous {
        model: ModeModel,
    },
    Ordinal {
        categories: Vec<String>,
        /// Moments of the 1-based ranks over the fitting table; the GAN
        /// standardizes ordinal scalars with these before training.
        rank_mean: f64,
        rank_std: f64,
    },
    Nominal {
        categories: Vec<String>,
        /// Category frequencies over the fitting table, for
        /// training-by-sampling.
        freqs: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: FittedKind,
}

impl ColumnMeta {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FittedKind::Continuous { .. })
    }

    pub fn is_nominal(&self) -> bool {
        matches!(self.kind, FittedKind::Nominal { .. })
    }

    /// 1-based rank of an ordinal value or the one-hot of a nominal value.
    pub fn encode_categorical(&self, value: &str) -> Result<Vec<f64>> {
        match &self.kind {
            FittedKind::Continuous { .. } => Err(Error::Argument(format!(
                "column {} is continuous, not categorical",
                self.name
            ))),
            FittedKind::Ordinal { categories, .. } => {
                let rank = categories.iter().position(|c| c == value).ok_or_else(|| {
                    Error::Data(format!("unseen category {value:?} in column {}", self.name))
                })?;
                Ok(vec![(rank + 1) as f64])
            }
            FittedKind::Nominal { categories, .. } => {
                let idx = categories.iter().position(|c| c == value).ok_or_else(|| {
                    Error::Data(format!("unseen category {value:?} in column {}", self.name))
                })?;
                let mut one_hot = vec![0.0; categories.len()];
                one_hot[idx] = 1.0;
                Ok(one_hot)
            }
        }
    }
}

/// A fully fitted table schema: the reversible transform's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub version: u32,
    pub columns: Vec<ColumnMeta>,
}

pub const SCHEMA_VERSION: u32 = 1;

impl TableSchema {
    /// Fit declared columns against a table: mixture models for continuous
    /// columns, rank moments for ordinals, frequencies for nominals.
    pub fn fit<R: Rng + ?Sized>(
        table: &RawTable,
        decls: &[ColumnDecl],
        rng: &mut R,
    ) -> Result<TableSchema> {
        if decls.len() != table.n_cols() {
            return Err(Error::Schema(format!(
                "{} declared columns but table has {}",
                decls.len(),
                table.n_cols()
            )));
        }
        if table.n_rows() == 0 {
            return Err(Error::Schema("cannot fit a schema on an empty table".into()));
        }
        let mut columns = Vec::with_capacity(decls.len());
        for (col, decl) in decls.iter().enumerate() {
            if decl.name != table.columns[col] {
                return Err(Error::Schema(format!(
                    "declared column {:?} does not match table column {:?}",
                    decl.name, table.columns[col]
                )));
            }
            let kind = match decl.role {
                ColumnRole::Continuous => {
                    let values = table.real_column(col)?;
                    FittedKind::Continuous {
                        model: fit_mode_model(&values, MAX_MODES, rng)?,
                    }
                }
                ColumnRole::Ordinal => {
                    let ranks = categorical_ranks(table, col, decl)?;
                    let n = ranks.len() as f64;
                    let mean = ranks.iter().sum::<f64>() / n;
                    let var = ranks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
                    FittedKind::Ordinal {
                        categories: decl.categories.clone(),
                        rank_mean: mean,
                        rank_std: var.sqrt(),
                    }
                }
                ColumnRole::Nominal => {
                    let mut freqs = vec![0u64; decl.categories.len()];
                    for (r, row) in table.rows.iter().enumerate() {
                        let v = cat_cell(&row[col], &decl.name, r)?;
                        let idx = decl.categories.iter().position(|c| c == v).ok_or_else(|| {
                            Error::Data(format!(
                                "unseen category {v:?} in column {} (row {r})",
                                decl.name
                            ))
                        })?;
                        freqs[idx] += 1;
                    }
                    FittedKind::Nominal {
                        categories: decl.categories.clone(),
                        freqs,
                    }
                }
            };
            columns.push(ColumnMeta {
                name: decl.name.clone(),
                kind,
            });
        }
        Ok(TableSchema {
            version: SCHEMA_VERSION,
            columns,
        })
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Indices of nominal columns, the ones the conditional generator can
    /// condition on.
    pub fn nominal_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_nominal())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TableSchema> {
        let schema: TableSchema = serde_json::from_str(s)?;
        if schema.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} not supported (expected {SCHEMA_VERSION})",
                schema.version
            )));
        }
        Ok(schema)
    }
}

fn cat_cell<'a>(cell: &'a Cell, col: &str, row: usize) -> Result<&'a str> {
    cell.as_cat().ok_or_else(|| {
        Error::Data(format!("numeric cell in categorical column {col} (row {row})"))
    })
}

fn categorical_ranks(table: &RawTable, col: usize, decl: &ColumnDecl) -> Result<Vec<f64>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let v = cat_cell(&row[col], &decl.name, r)?;
            let rank = decl.categories.iter().position(|c| c == v).ok_or_else(|| {
                Error::Data(format!(
                    "unseen category {v:?} in column {} (row {r})",
                    decl.name
                ))
            })?;
            Ok((rank + 1) as f64)
        })
        .collect()
}

//! Conditional-generation plumbing: the cond vector layout over nominal
//! columns, log-frequency condition sampling, and matched real-row sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::matrix::{SegmentKind, TransformedMatrix};
use crate::transform::schema::{FittedKind, TableSchema};

/// One nominal column's mask span inside the cond vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondColumn {
    /// Index of the column in the schema.
    pub column: usize,
    pub start: usize,
    pub n_categories: usize,
}

/// Concatenated mask layout, aligned to the schema's nominal columns in
/// schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondLayout {
    pub columns: Vec<CondColumn>,
    pub width: usize,
}

impl CondLayout {
    pub fn of(schema: &TableSchema) -> CondLayout {
        let mut columns = Vec::new();
        let mut start = 0;
        for (column, meta) in schema.columns.iter().enumerate() {
            if let FittedKind::Nominal { categories, .. } = &meta.kind {
                columns.push(CondColumn {
                    column,
                    start,
                    n_categories: categories.len(),
                });
                start += categories.len();
            }
        }
        CondLayout {
            columns,
            width: start,
        }
    }

    fn position_of(&self, column: usize) -> Option<&CondColumn> {
        self.columns.iter().find(|c| c.column == column)
    }

    /// All-zero cond vector: the unconditional mode.
    pub fn unconditional(&self) -> Vec<f64> {
        vec![0.0; self.width]
    }
}

/// Cond vector with the selected column's mask one-hot and every other mask
/// zero. `column_index` addresses the schema, not the cond layout.
pub fn build_cond_vector(
    schema: &TableSchema,
    layout: &CondLayout,
    column_index: usize,
    category_index: usize,
) -> Result<Vec<f64>> {
    let meta = schema
        .columns
        .get(column_index)
        .ok_or_else(|| Error::Argument(format!("no column {column_index} in schema")))?;
    if !meta.is_nominal() {
        return Err(Error::Argument(format!(
            "column {} is not nominal; only nominal columns can be conditioned on",
            meta.name
        )));
    }
    let span = layout
        .position_of(column_index)
        .ok_or_else(|| Error::Argument(format!("column {} missing from cond layout", meta.name)))?;
    if category_index >= span.n_categories {
        return Err(Error::Argument(format!(
            "category {category_index} out of range for column {}",
            meta.name
        )));
    }
    let mut v = layout.unconditional();
    v[span.start + category_index] = 1.0;
    Ok(v)
}

/// One drawn condition: a nominal schema column and a category within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionDraw {
    pub column: usize,
    pub category: usize,
}

/// How condition categories are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondLaw {
    /// Training-by-sampling: probability proportional to log(1 + frequency),
    /// so rare categories get explored.
    LogFrequency,
    /// Probability proportional to the observed frequency; used at
    /// generation time so synthetic marginals match the data.
    Frequency,
}

/// Draw a condition: column uniform among nominal columns, category by the
/// given law. Returns `None` when the schema has no nominal columns.
pub fn sample_condition_with<R: Rng + ?Sized>(
    schema: &TableSchema,
    law: CondLaw,
    rng: &mut R,
) -> Option<ConditionDraw> {
    let nominal = schema.nominal_columns();
    if nominal.is_empty() {
        return None;
    }
    let column = nominal[rng.gen_range(0..nominal.len())];
    let FittedKind::Nominal { freqs, .. } = &schema.columns[column].kind else {
        unreachable!("nominal_columns only returns nominal columns");
    };
    let weights: Vec<f64> = match law {
        CondLaw::LogFrequency => freqs.iter().map(|&f| (1.0 + f as f64).ln()).collect(),
        CondLaw::Frequency => freqs.iter().map(|&f| f as f64).collect(),
    };
    let total: f64 = weights.iter().sum();
    let category = if total <= 0.0 {
        rng.gen_range(0..weights.len())
    } else {
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        chosen
    };
    Some(ConditionDraw { column, category })
}

/// Training-by-sampling draw (the log-frequency law).
pub fn sample_condition<R: Rng + ?Sized>(
    schema: &TableSchema,
    rng: &mut R,
) -> Option<ConditionDraw> {
    sample_condition_with(schema, CondLaw::LogFrequency, rng)
}

/// Row indices of the training matrix grouped by (nominal column, category),
/// so a drawn condition can be answered with a matching real row.
#[derive(Debug, Clone)]
pub struct RowIndex {
    /// `per_column[i][cat]` lists matrix rows whose i-th cond column takes
    /// category `cat`.
    per_column: Vec<Vec<Vec<usize>>>,
    layout: CondLayout,
}

impl RowIndex {
    pub fn build(matrix: &TransformedMatrix, layout: &CondLayout) -> RowIndex {
        let mut per_column = Vec::with_capacity(layout.columns.len());
        for cond_col in &layout.columns {
            let seg = matrix
                .layout
                .segments
                .iter()
                .find(|s| s.column == cond_col.column && s.kind == SegmentKind::Nominal)
                .expect("cond layout derived from the same schema");
            let mut buckets = vec![Vec::new(); cond_col.n_categories];
            for r in 0..matrix.n_rows() {
                let one_hot = &matrix.row(r)[seg.start..seg.start + seg.width];
                buckets[crate::transform::gmm::argmax(one_hot)].push(r);
            }
            per_column.push(buckets);
        }
        RowIndex {
            per_column,
            layout: layout.clone(),
        }
    }

    /// A uniformly drawn real row matching the condition; falls back to any
    /// row when the category never occurs in the data.
    pub fn sample_matching_row<R: Rng + ?Sized>(
        &self,
        draw: ConditionDraw,
        n_rows: usize,
        rng: &mut R,
    ) -> usize {
        let pos = self
            .layout
            .columns
            .iter()
            .position(|c| c.column == draw.column)
            .expect("condition drawn from the same layout");
        let bucket = &self.per_column[pos][draw.category];
        if bucket.is_empty() {
            rng.gen_range(0..n_rows)
        } else {
            bucket[rng.gen_range(0..bucket.len())]
        }
    }
}

//! Row encoding: raw rows to concatenated numeric vectors and back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::table::{Cell, RawTable};
use crate::transform::gmm::argmax;
use crate::transform::schema::{FittedKind, TableSchema};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// What one span of encoded columns holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Normalized continuous offset (width 1).
    Alpha,
    /// One-hot mode indicator of a continuous column.
    Beta,
    /// Ordinal rank scalar (width 1).
    Ordinal,
    /// One-hot of a nominal column.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Index of the source column in the schema.
    pub column: usize,
    pub kind: SegmentKind,
    pub start: usize,
    pub width: usize,
}

/// Ordered segment map of an encoded row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub width: usize,
}

impl Layout {
    /// Derive the layout from a fitted schema, in schema column order.
    pub fn of(schema: &TableSchema) -> Layout {
        let mut segments = Vec::new();
        let mut start = 0;
        for (column, meta) in schema.columns.iter().enumerate() {
            match &meta.kind {
                FittedKind::Continuous { model } => {
                    segments.push(Segment {
                        column,
                        kind: SegmentKind::Alpha,
                        start,
                        width: 1,
                    });
                    start += 1;
                    segments.push(Segment {
                        column,
                        kind: SegmentKind::Beta,
                        start,
                        width: model.mode_count(),
                    });
                    start += model.mode_count();
                }
                FittedKind::Ordinal { .. } => {
                    segments.push(Segment {
                        column,
                        kind: SegmentKind::Ordinal,
                        start,
                        width: 1,
                    });
                    start += 1;
                }
                FittedKind::Nominal { categories, .. } => {
                    segments.push(Segment {
                        column,
                        kind: SegmentKind::Nominal,
                        start,
                        width: categories.len(),
                    });
                    start += categories.len();
                }
            }
        }
        Layout {
            segments,
            width: start,
        }
    }
}

/// Encoded rows plus the layout that decodes them.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    pub data: Tensor2,
    pub layout: Layout,
}

impl TransformedMatrix {
    pub fn n_rows(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.data.row(r)
    }
}

fn encode_row(row: &[Cell], schema: &TableSchema, layout: &Layout) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layout.width);
    for (col, meta) in schema.columns.iter().enumerate() {
        match &meta.kind {
            FittedKind::Continuous { model } => {
                let v = row[col].as_real().ok_or_else(|| {
                    Error::Data(format!("non-numeric cell in continuous column {}", meta.name))
                })?;
                let (alpha, beta) = model.normalize(v)?;
                out.push(alpha);
                out.extend_from_slice(&beta);
            }
            FittedKind::Ordinal { .. } | FittedKind::Nominal { .. } => {
                let v = row[col].as_cat().ok_or_else(|| {
                    Error::Data(format!("numeric cell in categorical column {}", meta.name))
                })?;
                out.extend(meta.encode_categorical(v)?);
            }
        }
    }
    Ok(out)
}

/// Encode a whole table in schema column order.
pub fn transform(table: &RawTable, schema: &TableSchema) -> Result<TransformedMatrix> {
    if table.n_cols() != schema.columns.len() {
        return Err(Error::Schema(format!(
            "table has {} columns, schema {}",
            table.n_cols(),
            schema.columns.len()
        )));
    }
    let layout = Layout::of(schema);
    let encoded = encode_rows(&table.rows, schema, &layout)?;
    let mut data = Vec::with_capacity(table.n_rows() * layout.width);
    for row in encoded {
        data.extend(row);
    }
    Ok(TransformedMatrix {
        data: Tensor2::from_vec(table.n_rows(), layout.width, data)?,
        layout,
    })
}

#[cfg(feature = "parallel")]
fn encode_rows(
    rows: &[Vec<Cell>],
    schema: &TableSchema,
    layout: &Layout,
) -> Result<Vec<Vec<f64>>> {
    rows.par_iter()
        .map(|row| encode_row(row, schema, layout))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn encode_rows(
    rows: &[Vec<Cell>],
    schema: &TableSchema,
    layout: &Layout,
) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|row| encode_row(row, schema, layout))
        .collect()
}

/// Decode encoded rows (possibly generator output with soft one-hots) back
/// into a raw table. Soft beta/nominal segments decode by argmax; ordinal
/// scalars round to the nearest valid rank.
pub fn inverse_transform(rows: &Tensor2, schema: &TableSchema) -> Result<RawTable> {
    let layout = Layout::of(schema);
    if rows.cols() != layout.width {
        return Err(Error::Layout(format!(
            "row width {} does not match layout width {}",
            rows.cols(),
            layout.width
        )));
    }
    let mut table = RawTable::new(schema.columns.iter().map(|c| c.name.clone()).collect());
    for r in 0..rows.rows() {
        let enc = rows.row(r);
        let mut raw = Vec::with_capacity(schema.columns.len());
        let mut seg_iter = layout.segments.iter();
        for meta in &schema.columns {
            match &meta.kind {
                FittedKind::Continuous { model } => {
                    let alpha_seg = seg_iter.next().expect("layout matches schema");
                    let beta_seg = seg_iter.next().expect("layout matches schema");
                    let alpha = enc[alpha_seg.start];
                    let beta = &enc[beta_seg.start..beta_seg.start + beta_seg.width];
                    raw.push(Cell::Real(model.denormalize(alpha, beta)));
                }
                FittedKind::Ordinal { categories, .. } => {
                    let seg = seg_iter.next().expect("layout matches schema");
                    let rank = enc[seg.start].round().clamp(1.0, categories.len() as f64);
                    raw.push(Cell::Cat(categories[rank as usize - 1].clone()));
                }
                FittedKind::Nominal { categories, .. } => {
                    let seg = seg_iter.next().expect("layout matches schema");
                    let one_hot = &enc[seg.start..seg.start + seg.width];
                    raw.push(Cell::Cat(categories[argmax(one_hot)].clone()));
                }
            }
        }
        table.push_row(raw)?;
    }
    Ok(table)
}

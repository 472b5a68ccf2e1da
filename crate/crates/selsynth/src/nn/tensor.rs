//! Dense row-major matrices holding batch data and parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A dense `rows x cols` matrix of f64 in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape("ragged row lengths".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// 1x1 matrix holding a single scalar.
    pub fn scalar(v: f64) -> Self {
        Tensor2 {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
        debug_assert_eq!(self.shape(), other.shape());
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix product `self * other`.
    ///
    /// Rows of the output are independent, so the parallel build fans the row
    /// loop out over the rayon pool. Each output element is still a single
    /// sequential dot product, which keeps results bit-identical to the
    /// sequential build.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        matmul_into(
            &self.data,
            &other.data,
            self.rows,
            self.cols,
            other.cols,
            &mut out.data,
        );
        Ok(out)
    }

    /// Single-threaded matrix product, kept callable from the parallel build
    /// for benchmark comparison.
    pub fn matmul_seq(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        matmul_rows_seq(
            &self.data,
            &other.data,
            self.cols,
            other.cols,
            &mut out.data,
        );
        Ok(out)
    }
}

fn matmul_row(a_row: &[f64], b: &[f64], inner: usize, n: usize, out_row: &mut [f64]) {
    out_row.fill(0.0);
    for (k, &aik) in a_row.iter().enumerate().take(inner) {
        if aik == 0.0 {
            continue;
        }
        let b_row = &b[k * n..(k + 1) * n];
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o += aik * bv;
        }
    }
}

fn matmul_rows_seq(a: &[f64], b: &[f64], inner: usize, n: usize, out: &mut [f64]) {
    for (a_row, out_row) in a.chunks_exact(inner).zip(out.chunks_exact_mut(n)) {
        matmul_row(a_row, b, inner, n, out_row);
    }
}

#[cfg(feature = "parallel")]
fn matmul_into(a: &[f64], b: &[f64], m: usize, inner: usize, n: usize, out: &mut [f64]) {
    // Small products are not worth the fork/join overhead.
    if m * inner * n < 64 * 64 * 64 {
        matmul_rows_seq(a, b, inner, n, out);
        return;
    }
    out.par_chunks_mut(n)
        .zip(a.par_chunks(inner))
        .for_each(|(out_row, a_row)| matmul_row(a_row, b, inner, n, out_row));
}

#[cfg(not(feature = "parallel"))]
fn matmul_into(a: &[f64], b: &[f64], _m: usize, inner: usize, n: usize, out: &mut [f64]) {
    matmul_rows_seq(a, b, inner, n, out);
}

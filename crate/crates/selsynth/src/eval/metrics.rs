//! Table-level fidelity metrics: mode collapse, CDF comparison, pairwise
//! correlation, and the selectivity error of synthetic data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{selectivity_mse, SelEstimator};
use crate::nn::Tensor2;
use crate::oracle::build_test_workload;
use crate::rng::stream;
use crate::table::{Cell, RawTable};
use crate::transform::schema::TableSchema;
use crate::transform::transform;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Percentage of rows that are duplicates of an earlier row. Continuous
/// values compare bit-exactly.
pub fn repeated_row_rate(table: &RawTable) -> Result<f64> {
    if table.n_rows() == 0 {
        return Err(Error::Argument("repeated-row rate of an empty table".into()));
    }
    let mut seen = std::collections::HashSet::with_capacity(table.n_rows());
    let mut distinct = 0usize;
    for row in &table.rows {
        let key: Vec<u64> = row
            .iter()
            .map(|c| match c {
                Cell::Real(v) => v.to_bits(),
                Cell::Cat(s) => {
                    // FNV-1a over the label, offset to avoid colliding with
                    // small float bit patterns in practice
                    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                    for b in s.as_bytes() {
                        h ^= u64::from(*b);
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                    h
                }
            })
            .collect();
        if seen.insert(key) {
            distinct += 1;
        }
    }
    Ok(100.0 * (table.n_rows() - distinct) as f64 / table.n_rows() as f64)
}

/// One point of a paired empirical CDF table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub f_origin: f64,
    pub f_synth: f64,
}

/// Paired empirical CDFs of two continuous columns on their merged grid.
pub fn cdf_export(origin: &[f64], synth: &[f64]) -> Result<Vec<CdfPoint>> {
    if origin.is_empty() || synth.is_empty() {
        return Err(Error::Argument("cdf comparison needs nonempty columns".into()));
    }
    let mut grid: Vec<f64> = origin.iter().chain(synth).copied().collect();
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in a cdf column".into()));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let mut o_sorted = origin.to_vec();
    o_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut s_sorted = synth.to_vec();
    s_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let frac_le = |sorted: &[f64], v: f64| {
        let count = sorted.partition_point(|x| *x <= v);
        count as f64 / sorted.len() as f64
    };

    Ok(grid
        .into_iter()
        .map(|value| CdfPoint {
            value,
            f_origin: frac_le(&o_sorted, value),
            f_synth: frac_le(&s_sorted, value),
        })
        .collect())
}

/// Sum over continuous column pairs of the absolute difference in Pearson
/// correlation between the two tables. Constant columns contribute zero
/// correlation and a warning.
pub fn pairwise_correlation_difference(
    t_origin: &RawTable,
    t_synth: &RawTable,
    schema: &TableSchema,
) -> Result<(f64, Vec<String>)> {
    let cont: Vec<usize> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_continuous())
        .map(|(i, _)| i)
        .collect();
    if cont.len() < 2 {
        return Err(Error::Argument(
            "need at least two continuous columns for correlation comparison".into(),
        ));
    }
    if t_origin.n_cols() != schema.columns.len() || t_synth.n_cols() != schema.columns.len() {
        return Err(Error::Argument("tables do not match the schema".into()));
    }

    let mut warnings = Vec::new();
    let col = |t: &RawTable, i: usize| t.real_column(i);
    let mut total = 0.0;
    for (a_pos, &a) in cont.iter().enumerate() {
        for &b in &cont[a_pos + 1..] {
            let (oa, ob) = (col(t_origin, a)?, col(t_origin, b)?);
            let (sa, sb) = (col(t_synth, a)?, col(t_synth, b)?);
            let rho_o = pearson(&oa, &ob, &mut warnings, "origin", schema, a, b);
            let rho_s = pearson(&sa, &sb, &mut warnings, "synthetic", schema, a, b);
            total += (rho_o - rho_s).abs();
        }
    }
    Ok((total, warnings))
}

fn pearson(
    x: &[f64],
    y: &[f64],
    warnings: &mut Vec<String>,
    which: &str,
    schema: &TableSchema,
    a: usize,
    b: usize,
) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        warnings.push(format!(
            "constant column in {which} pair ({}, {}); correlation treated as 0",
            schema.columns[a].name, schema.columns[b].name
        ));
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Mean selectivity MSE of a synthetic table over repeated test workloads,
/// labels always computed on the transformed original data.
pub fn selectivity_mse_eval(
    t_synth: &RawTable,
    schema: &TableSchema,
    d_origin: &Tensor2,
    estimator: &SelEstimator,
    num_queries: usize,
    repeats: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if repeats == 0 {
        return Err(Error::Argument("repeats must be positive".into()));
    }
    let synth = transform(t_synth, schema)?;
    if synth.width() != d_origin.cols() {
        return Err(Error::Config(format!(
            "synthetic width {} vs original width {}",
            synth.width(),
            d_origin.cols()
        )));
    }
    if estimator.input_width != d_origin.cols() {
        return Err(Error::Config(format!(
            "estimator width {} vs data width {}",
            estimator.input_width,
            d_origin.cols()
        )));
    }
    let per_repeat = run_repeats(&synth.data, d_origin, estimator, num_queries, repeats, seed)?;
    let mean = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    Ok((mean, per_repeat))
}

fn one_repeat(
    synth: &Tensor2,
    d_origin: &Tensor2,
    estimator: &SelEstimator,
    num_queries: usize,
    seed: u64,
    repeat: usize,
) -> Result<f64> {
    let mut rng = stream(seed, &format!("eval/sel/{repeat}"));
    let workload = build_test_workload(synth, d_origin, num_queries, estimator.t_max, &mut rng)?;
    let labeled = workload.labeled()?;
    selectivity_mse(&labeled, estimator)
}

#[cfg(feature = "parallel")]
fn run_repeats(
    synth: &Tensor2,
    d_origin: &Tensor2,
    estimator: &SelEstimator,
    num_queries: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..repeats)
        .into_par_iter()
        .map(|i| one_repeat(synth, d_origin, estimator, num_queries, seed, i))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_repeats(
    synth: &Tensor2,
    d_origin: &Tensor2,
    estimator: &SelEstimator,
    num_queries: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..repeats)
        .map(|i| one_repeat(synth, d_origin, estimator, num_queries, seed, i))
        .collect()
}

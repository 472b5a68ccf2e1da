//! Exact selectivity over the transformed original data, and workload
//! construction for estimator training and evaluation.
//!
//! Labeling is brute force on purpose: every estimator and generator test in
//! this crate is checked against these counts, so they have to be trivially
//! correct.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Distance used to define selectivity. Only one kind today; workload files
/// record it so a future kind cannot silently relabel old workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Euclidean,
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One selectivity query: an object in the transformed space, a distance
/// threshold, and (once labeled) the exact count against the original data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub x: Vec<f64>,
    pub t: f64,
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    Train,
    Test,
}

/// A labeled (or to-be-labeled) batch of queries sharing one threshold range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub version: u32,
    pub distance: DistanceKind,
    pub t_max: f64,
    pub source: WorkloadSource,
    pub queries: Vec<Query>,
}

pub const WORKLOAD_VERSION: u32 = 1;

impl Workload {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Workload> {
        let w: Workload = serde_json::from_str(s)?;
        if w.version != WORKLOAD_VERSION {
            return Err(Error::Config(format!(
                "workload version {} not supported (expected {WORKLOAD_VERSION})",
                w.version
            )));
        }
        Ok(w)
    }

    /// (x, t, y) views for training; errors if any query is unlabeled.
    pub fn labeled(&self) -> Result<Vec<(&[f64], f64, f64)>> {
        self.queries
            .iter()
            .map(|q| {
                let y = q
                    .y
                    .ok_or_else(|| Error::Data("workload contains unlabeled queries".into()))?;
                Ok((q.x.as_slice(), q.t, y))
            })
            .collect()
    }
}

/// Exact count of original rows within distance `t` of `x`.
pub fn exact_selectivity(x: &[f64], t: f64, d_origin: &Tensor2) -> Result<usize> {
    if t < 0.0 {
        return Err(Error::Argument(format!("negative threshold {t}")));
    }
    if x.len() != d_origin.cols() {
        return Err(Error::Shape(format!(
            "query width {} vs data width {}",
            x.len(),
            d_origin.cols()
        )));
    }
    let mut count = 0;
    for r in 0..d_origin.rows() {
        if distance(x, d_origin.row(r)) <= t {
            count += 1;
        }
    }
    Ok(count)
}

/// Label many queries against the same data snapshot. Queries are independent,
/// so the parallel build fans out per query and collects in order.
pub fn label_queries(queries: &mut [Query], d_origin: &Tensor2) -> Result<()> {
    let labels = compute_labels(queries, d_origin)?;
    for (q, y) in queries.iter_mut().zip(labels) {
        q.y = Some(y as f64);
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn compute_labels(queries: &[Query], d_origin: &Tensor2) -> Result<Vec<usize>> {
    queries
        .par_iter()
        .map(|q| exact_selectivity(&q.x, q.t, d_origin))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn compute_labels(queries: &[Query], d_origin: &Tensor2) -> Result<Vec<usize>> {
    queries
        .iter()
        .map(|q| exact_selectivity(&q.x, q.t, d_origin))
        .collect()
}

/// Exact counts for a batch of rows with per-row thresholds.
pub fn exact_selectivities(xs: &Tensor2, ts: &[f64], d_origin: &Tensor2) -> Result<Vec<usize>> {
    if ts.len() != xs.rows() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} rows",
            ts.len(),
            xs.rows()
        )));
    }
    let pairs: Vec<(usize, f64)> = ts.iter().copied().enumerate().collect();
    batch_selectivities(&pairs, xs, d_origin)
}

#[cfg(feature = "parallel")]
fn batch_selectivities(
    pairs: &[(usize, f64)],
    xs: &Tensor2,
    d_origin: &Tensor2,
) -> Result<Vec<usize>> {
    pairs
        .par_iter()
        .map(|&(r, t)| exact_selectivity(xs.row(r), t, d_origin))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn batch_selectivities(
    pairs: &[(usize, f64)],
    xs: &Tensor2,
    d_origin: &Tensor2,
) -> Result<Vec<usize>> {
    pairs
        .iter()
        .map(|&(r, t)| exact_selectivity(xs.row(r), t, d_origin))
        .collect()
}

/// Single-threaded labeling, kept callable from the parallel build for
/// benchmark comparison.
pub fn label_queries_seq(queries: &mut [Query], d_origin: &Tensor2) -> Result<()> {
    for q in queries.iter_mut() {
        q.y = Some(exact_selectivity(&q.x, q.t, d_origin)? as f64);
    }
    Ok(())
}

/// Number of row pairs sampled when estimating the threshold range.
const T_MAX_SAMPLE_PAIRS: usize = 1000;
/// The threshold range is the 90th-percentile sampled pairwise distance,
/// keeping labels off the everything-matches plateau.
const T_MAX_PERCENTILE: f64 = 0.90;

/// Empirical threshold range of a dataset.
pub fn estimate_t_max<R: Rng + ?Sized>(d_origin: &Tensor2, rng: &mut R) -> Result<f64> {
    let n = d_origin.rows();
    if n < 2 {
        return Err(Error::Data("need at least two rows to estimate t_max".into()));
    }
    let mut dists = Vec::with_capacity(T_MAX_SAMPLE_PAIRS);
    for _ in 0..T_MAX_SAMPLE_PAIRS {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        dists.push(distance(d_origin.row(i), d_origin.row(j)));
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((dists.len() as f64 * T_MAX_PERCENTILE) as usize).min(dists.len() - 1);
    let t_max = dists[idx];
    if t_max <= 0.0 {
        // all sampled pairs coincide; fall back to the max sampled distance
        // or a unit range so thresholds stay positive
        let max = dists.last().copied().unwrap_or(0.0);
        return Ok(if max > 0.0 { max } else { 1.0 });
    }
    Ok(t_max)
}

/// Draw a threshold from the training threshold law: uniform on (0, t_max].
pub fn draw_threshold<R: Rng + ?Sized>(t_max: f64, rng: &mut R) -> f64 {
    t_max * (1.0 - rng.gen::<f64>())
}

/// Training workload: every original row becomes a query object, paired with
/// `thresholds_per_object` drawn thresholds, labeled exactly.
pub fn build_train_workload<R: Rng + ?Sized>(
    d_origin: &Tensor2,
    thresholds_per_object: usize,
    t_max: f64,
    rng: &mut R,
) -> Result<Workload> {
    if d_origin.rows() == 0 {
        return Err(Error::Data("cannot build a workload from an empty dataset".into()));
    }
    if t_max <= 0.0 {
        return Err(Error::Argument(format!("t_max must be positive, got {t_max}")));
    }
    let mut queries = Vec::with_capacity(d_origin.rows() * thresholds_per_object);
    for r in 0..d_origin.rows() {
        for _ in 0..thresholds_per_object {
            queries.push(Query {
                x: d_origin.row(r).to_vec(),
                t: draw_threshold(t_max, rng),
                y: None,
            });
        }
    }
    label_queries(&mut queries, d_origin)?;
    Ok(Workload {
        version: WORKLOAD_VERSION,
        distance: DistanceKind::Euclidean,
        t_max,
        source: WorkloadSource::Train,
        queries,
    })
}

/// Test workload: query objects sampled from synthetic rows (with replacement
/// when more queries than rows are asked for), labels computed on the
/// original data.
pub fn build_test_workload<R: Rng + ?Sized>(
    synthetic: &Tensor2,
    d_origin: &Tensor2,
    num_queries: usize,
    t_max: f64,
    rng: &mut R,
) -> Result<Workload> {
    if synthetic.cols() != d_origin.cols() {
        return Err(Error::Shape(format!(
            "synthetic width {} vs original width {}",
            synthetic.cols(),
            d_origin.cols()
        )));
    }
    if synthetic.rows() == 0 {
        return Err(Error::Data("no synthetic rows to query".into()));
    }
    let mut queries = Vec::with_capacity(num_queries);
    for _ in 0..num_queries {
        let r = rng.gen_range(0..synthetic.rows());
        queries.push(Query {
            x: synthetic.row(r).to_vec(),
            t: draw_threshold(t_max, rng),
            y: None,
        });
    }
    label_queries(&mut queries, d_origin)?;
    Ok(Workload {
        version: WORKLOAD_VERSION,
        distance: DistanceKind::Euclidean,
        t_max,
        source: WorkloadSource::Test,
        queries,
    })
}

//! Per-column Gaussian mixture fitting for mode-specific normalization.
//!
//! EM with k-means++ seeded means, run once per candidate component count up
//! to the budget; BIC picks the count. Components whose weight falls below
//! [`PRUNE_THRESHOLD`] after convergence are dropped and the weights
//! renormalized. Plain EM at a fixed count would spread weight over redundant
//! overlapping components on unimodal data, so the count itself has to be
//! selected, not just pruned.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Smallest admissible component standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;
/// Components lighter than this after convergence are pruned.
pub const PRUNE_THRESHOLD: f64 = 0.005;
/// Default component budget.
pub const MAX_MODES: usize = 10;
/// Normalized offsets are clamped to this many standard deviations.
pub const ALPHA_CLIP: f64 = 4.0;

const EM_MAX_ITERS: usize = 100;
const EM_TOL: f64 = 1e-6;
/// Fixed chunk length for the parallel E-step; partial sums are reduced in
/// chunk order so results do not depend on the thread count.
const E_STEP_CHUNK: usize = 1024;

/// A fitted univariate Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeModel {
    weights: Vec<f64>,
    means: Vec<f64>,
    std_devs: Vec<f64>,
}

impl ModeModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, std_devs: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || means.len() != std_devs.len() {
            return Err(Error::Shape("mode model parameter lengths differ".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("mode weights sum to {total}, not 1")));
        }
        if std_devs.iter().any(|s| *s < SIGMA_FLOOR) {
            return Err(Error::Numeric(format!(
                "mode standard deviation under the floor {SIGMA_FLOOR}"
            )));
        }
        Ok(ModeModel {
            weights,
            means,
            std_devs,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.means.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn std_devs(&self) -> &[f64] {
        &self.std_devs
    }

    /// Index of the most responsible mode for a value.
    pub fn mode_for(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.mode_count() {
            let s = self.weights[k].ln() + log_normal_pdf(value, self.means[k], self.std_devs[k]);
            if s > best_score {
                best_score = s;
                best = k;
            }
        }
        best
    }

    /// Mode-specific normalization: clamped offset within the most
    /// responsible mode plus the one-hot mode indicator.
    pub fn normalize(&self, value: f64) -> Result<(f64, Vec<f64>)> {
        if !value.is_finite() {
            return Err(Error::Data(format!("non-finite continuous value {value}")));
        }
        let k = self.mode_for(value);
        let alpha = ((value - self.means[k]) / self.std_devs[k]).clamp(-ALPHA_CLIP, ALPHA_CLIP);
        let mut beta = vec![0.0; self.mode_count()];
        beta[k] = 1.0;
        Ok((alpha, beta))
    }

    /// Inverse of [`normalize`](Self::normalize) given a (possibly soft) mode
    /// indicator: the heaviest beta entry picks the mode.
    pub fn denormalize(&self, alpha: f64, beta: &[f64]) -> f64 {
        let k = argmax(beta);
        alpha * self.std_devs[k] + self.means[k]
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    let _ = &xs[best];
    best
}

fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Fit a mixture to one column's values.
pub fn fit_mode_model<R: Rng + ?Sized>(
    values: &[f64],
    max_modes: usize,
    rng: &mut R,
) -> Result<ModeModel> {
    if values.is_empty() {
        return Err(Error::Schema("cannot fit a mode model on an empty column".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {bad} in continuous column")));
    }

    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 {
        // constant column: one mode at the value with the floor deviation
        return Ok(ModeModel {
            weights: vec![1.0],
            means: vec![values[0]],
            std_devs: vec![SIGMA_FLOOR],
        });
    }

    let k_cap = max_modes.max(1).min(distinct.len());
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    for k in 1..=k_cap {
        let (weights, means, stds, ll) = em_fit(values, k, rng);
        // BIC with 3k - 1 free parameters per candidate
        let bic = -2.0 * ll * values.len() as f64
            + (3 * k - 1) as f64 * (values.len() as f64).ln();
        if best.as_ref().map_or(true, |(b, ..)| bic < *b) {
            best = Some((bic, weights, means, stds));
        }
    }
    let (_, weights, means, stds) = best.expect("k_cap >= 1");

    // prune featherweight components and renormalize
    let mut kept = ModeModel {
        weights: Vec::new(),
        means: Vec::new(),
        std_devs: Vec::new(),
    };
    for i in 0..weights.len() {
        if weights[i] >= PRUNE_THRESHOLD {
            kept.weights.push(weights[i]);
            kept.means.push(means[i]);
            kept.std_devs.push(stds[i].max(SIGMA_FLOOR));
        }
    }
    if kept.weights.is_empty() {
        let heaviest = argmax(&weights);
        kept.weights.push(1.0);
        kept.means.push(means[heaviest]);
        kept.std_devs.push(stds[heaviest].max(SIGMA_FLOOR));
    }
    let total: f64 = kept.weights.iter().sum();
    for w in &mut kept.weights {
        *w /= total;
    }
    Ok(kept)
}

fn em_fit<R: Rng + ?Sized>(
    values: &[f64],
    k: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let mut means = kmeans_pp_init(values, k, rng);
    let global_std = std_dev(values).max(SIGMA_FLOOR);
    let mut stds = vec![global_std; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = prev_ll;
    for _ in 0..EM_MAX_ITERS {
        let (stats, avg_ll) = e_step(values, &weights, &means, &stds);
        m_step(&stats, values.len(), &mut weights, &mut means, &mut stds);
        ll = avg_ll;
        if (ll - prev_ll).abs() < EM_TOL * (1.0 + ll.abs()) {
            break;
        }
        prev_ll = ll;
    }
    (weights, means, stds, ll)
}

/// Per-component sufficient statistics of one E step.
#[derive(Clone)]
struct SuffStats {
    resp_sum: Vec<f64>,
    weighted_sum: Vec<f64>,
    weighted_sq_sum: Vec<f64>,
    log_lik: f64,
}

impl SuffStats {
    fn zero(k: usize) -> Self {
        SuffStats {
            resp_sum: vec![0.0; k],
            weighted_sum: vec![0.0; k],
            weighted_sq_sum: vec![0.0; k],
            log_lik: 0.0,
        }
    }

    fn absorb(&mut self, other: &SuffStats) {
        for i in 0..self.resp_sum.len() {
            self.resp_sum[i] += other.resp_sum[i];
            self.weighted_sum[i] += other.weighted_sum[i];
            self.weighted_sq_sum[i] += other.weighted_sq_sum[i];
        }
        self.log_lik += other.log_lik;
    }
}

fn chunk_stats(chunk: &[f64], weights: &[f64], means: &[f64], stds: &[f64]) -> SuffStats {
    let k = weights.len();
    let mut s = SuffStats::zero(k);
    let mut log_probs = vec![0.0; k];
    for &x in chunk {
        for i in 0..k {
            log_probs[i] = weights[i].ln() + log_normal_pdf(x, means[i], stds[i]);
        }
        let m = log_probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for lp in &log_probs {
            z += (lp - m).exp();
        }
        s.log_lik += m + z.ln();
        for i in 0..k {
            let r = (log_probs[i] - m).exp() / z;
            s.resp_sum[i] += r;
            s.weighted_sum[i] += r * x;
            s.weighted_sq_sum[i] += r * x * x;
        }
    }
    s
}

fn e_step(values: &[f64], weights: &[f64], means: &[f64], stds: &[f64]) -> (SuffStats, f64) {
    let partials = chunked_stats(values, weights, means, stds);
    let mut total = SuffStats::zero(weights.len());
    for p in &partials {
        total.absorb(p);
    }
    let ll = total.log_lik / values.len() as f64;
    (total, ll)
}

#[cfg(feature = "parallel")]
fn chunked_stats(values: &[f64], weights: &[f64], means: &[f64], stds: &[f64]) -> Vec<SuffStats> {
    values
        .par_chunks(E_STEP_CHUNK)
        .map(|c| chunk_stats(c, weights, means, stds))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn chunked_stats(values: &[f64], weights: &[f64], means: &[f64], stds: &[f64]) -> Vec<SuffStats> {
    values
        .chunks(E_STEP_CHUNK)
        .map(|c| chunk_stats(c, weights, means, stds))
        .collect()
}

/// Single-threaded E step over one undivided chunk, for benchmarks. Chunking
/// changes nothing numerically; this skips the chunk machinery entirely.
pub fn e_step_seq_for_bench(
    values: &[f64],
    weights: &[f64],
    means: &[f64],
    stds: &[f64],
) -> f64 {
    chunk_stats(values, weights, means, stds).log_lik
}

/// The chunked E step the fitter actually runs (parallel when the feature is
/// on), for benchmarks.
pub fn e_step_for_bench(values: &[f64], weights: &[f64], means: &[f64], stds: &[f64]) -> f64 {
    e_step(values, weights, means, stds).1
}

fn m_step(
    stats: &SuffStats,
    n: usize,
    weights: &mut Vec<f64>,
    means: &mut Vec<f64>,
    stds: &mut Vec<f64>,
) {
    let k = weights.len();
    for i in 0..k {
        let r = stats.resp_sum[i];
        if r < 1e-12 {
            // dead component; weight will fall under the prune threshold
            weights[i] = 0.0;
            continue;
        }
        weights[i] = r / n as f64;
        means[i] = stats.weighted_sum[i] / r;
        let var = (stats.weighted_sq_sum[i] / r - means[i] * means[i]).max(0.0);
        stds[i] = var.sqrt().max(SIGMA_FLOOR);
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

fn kmeans_pp_init<R: Rng + ?Sized>(values: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.gen_range(0..values.len())]);
    let mut d2: Vec<f64> = values
        .iter()
        .map(|v| (v - centers[0]) * (v - centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            values[rng.gen_range(0..values.len())]
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = values[values.len() - 1];
            for (v, d) in values.iter().zip(&d2) {
                target -= d;
                if target <= 0.0 {
                    chosen = *v;
                    break;
                }
            }
            chosen
        };
        centers.push(next);
        for (v, d) in values.iter().zip(&mut d2) {
            let nd = (v - next) * (v - next);
            if nd < *d {
                *d = nd;
            }
        }
    }
    centers
}

//! The pre-trained selectivity estimator.
//!
//! An autoencoder learns a latent code z for a query object x; two heads read
//! `[x; z]`: one emits raw knot increments that become the strictly increasing
//! control points `tau_0 = 0 < tau_1 < ... < tau_{L+1} = t_max + eps`, the
//! other emits per-knot embeddings projected to nonnegative increments `k_i`
//! whose running sum is the cumulative selectivity curve `p`. A query's
//! estimate is the piecewise-linear read-out of (tau, p) at its threshold.
//!
//! Training minimizes squared error on log1p-scaled counts plus a weighted
//! autoencoder reconstruction term. Once trained the model is frozen; the
//! generator trainer only evaluates it.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::NodeId;
use crate::nn::{adam_step, AdamState, Activation, Mlp, MlpVars, Tape, Tensor2};
use crate::oracle::{DistanceKind, Workload};

/// Keeps consecutive control points strictly apart.
const KNOT_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelEstimatorConfig {
    /// Number of interior partitions L; the model carries L + 2 knots.
    pub partitions: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    /// Width of each per-knot embedding.
    pub embed_dim: usize,
    /// Weight of the reconstruction term in the joint loss.
    pub lambda_ae: f64,
    pub ae_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for SelEstimatorConfig {
    fn default() -> Self {
        SelEstimatorConfig {
            partitions: 16,
            latent_dim: 32,
            hidden: 128,
            embed_dim: 16,
            lambda_ae: 0.1,
            ae_epochs: 100,
            epochs: 120,
            batch_size: 512,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

pub const ESTIMATOR_VERSION: u32 = 1;

/// A (possibly trained) selectivity estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelEstimator {
    pub version: u32,
    encoder: Mlp,
    decoder: Mlp,
    tau_head: Mlp,
    p_embed: Mlp,
    /// Per-knot projection weights, `embed_dim x (L + 2)`.
    p_proj_w: Tensor2,
    p_proj_b: Tensor2,
    pub partitions: usize,
    pub embed_dim: usize,
    pub lambda_ae: f64,
    pub t_max: f64,
    pub epsilon: f64,
    pub input_width: usize,
    /// Distance the training workload was labeled under.
    pub distance: DistanceKind,
}

/// Node handles of one registered estimator forward pass.
pub struct EstimatorNodes {
    pub latent: NodeId,
    pub x_recon: NodeId,
    pub tau: NodeId,
    pub p: NodeId,
}

pub(crate) struct EstimatorVars {
    encoder: MlpVars,
    decoder: MlpVars,
    tau_head: MlpVars,
    p_embed: MlpVars,
    p_proj_w: NodeId,
    p_proj_b: NodeId,
}

impl EstimatorVars {
    fn param_ids(&self) -> Vec<NodeId> {
        let mut ids = self.encoder.param_ids();
        ids.extend(self.decoder.param_ids());
        ids.extend(self.tau_head.param_ids());
        ids.extend(self.p_embed.param_ids());
        ids.push(self.p_proj_w);
        ids.push(self.p_proj_b);
        ids
    }
}

impl SelEstimator {
    pub fn new<R: Rng + ?Sized>(
        input_width: usize,
        t_max: f64,
        distance: DistanceKind,
        config: &SelEstimatorConfig,
        rng: &mut R,
    ) -> Self {
        let knots = config.partitions + 2;
        let xz = input_width + config.latent_dim;
        let mut p_proj_w = Tensor2::zeros(config.embed_dim, knots);
        let limit = (6.0 / (config.embed_dim + 1) as f64).sqrt();
        for w in p_proj_w.data_mut() {
            *w = rng.gen_range(-limit..=limit);
        }
        // small positive bias keeps the relu increments alive at the start
        let p_proj_b = Tensor2::zeros(1, knots).map(|_| 0.1);
        SelEstimator {
            version: ESTIMATOR_VERSION,
            encoder: Mlp::new(
                &[input_width, config.hidden, config.latent_dim],
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
            decoder: Mlp::new(
                &[config.latent_dim, config.hidden, input_width],
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
            tau_head: Mlp::new(
                &[xz, config.hidden, knots],
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
            p_embed: Mlp::new(
                &[xz, config.hidden, knots * config.embed_dim],
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
            p_proj_w,
            p_proj_b,
            partitions: config.partitions,
            embed_dim: config.embed_dim,
            lambda_ae: config.lambda_ae,
            t_max,
            epsilon: 1e-3 * t_max,
            input_width,
            distance,
        }
    }

    pub fn knots(&self) -> usize {
        self.partitions + 2
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.input_width {
            return Err(Error::Shape(format!(
                "input width {width} vs trained width {}",
                self.input_width
            )));
        }
        Ok(())
    }

    /// Autoencoder pass outside the tape.
    pub fn ae_forward(&self, x: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        self.check_width(x.cols())?;
        let z = self.encoder.forward(x)?;
        let recon = self.decoder.forward(&z)?;
        Ok((z, recon))
    }

    pub(crate) fn register(&self, tape: &mut Tape) -> EstimatorVars {
        EstimatorVars {
            encoder: self.encoder.register(tape),
            decoder: self.decoder.register(tape),
            tau_head: self.tau_head.register(tape),
            p_embed: self.p_embed.register(tape),
            p_proj_w: tape.leaf(self.p_proj_w.clone()),
            p_proj_b: tape.leaf(self.p_proj_b.clone()),
        }
    }

    /// Full differentiable forward pass from an on-tape input batch.
    pub(crate) fn forward_on_tape(
        &self,
        tape: &mut Tape,
        vars: &EstimatorVars,
        x: NodeId,
    ) -> Result<EstimatorNodes> {
        let knots = self.knots();
        let latent = vars.encoder.forward(tape, x)?;
        let x_recon = vars.decoder.forward(tape, latent)?;
        let xz = tape.concat_cols(x, latent)?;

        // control points: positive increments, running sum, affine rescale to
        // pin tau_0 = 0 and tau_{L+1} = t_max + eps
        let raw = vars.tau_head.forward(tape, xz)?;
        let inc = tape.softplus(raw);
        let inc = tape.add_scalar(inc, KNOT_GAP);
        let cum = tape.cumsum_cols(inc);
        let first = tape.slice_cols(cum, 0, 1)?;
        let last = tape.slice_cols(cum, knots - 1, 1)?;
        let shifted = tape.sub_col_vec(cum, first)?;
        let span = tape.sub(last, first)?;
        let unit = tape.div_col_vec(shifted, span)?;
        let tau = tape.scale(unit, self.t_max + self.epsilon);

        // cumulative selectivities: per-knot linear read-outs of the
        // embedding blocks, relu for nonnegativity, running sum
        let embed = vars.p_embed.forward(tape, xz)?;
        let mut k = None;
        for i in 0..knots {
            let h_i = tape.slice_cols(embed, i * self.embed_dim, self.embed_dim)?;
            let w_i = tape.slice_cols(vars.p_proj_w, i, 1)?;
            let b_i = tape.slice_cols(vars.p_proj_b, i, 1)?;
            let z_i = tape.matmul(h_i, w_i)?;
            let z_i = tape.add_row_vec(z_i, b_i)?;
            let k_i = tape.activation(z_i, Activation::Relu);
            k = Some(match k {
                None => k_i,
                Some(prev) => tape.concat_cols(prev, k_i)?,
            });
        }
        let p = tape.cumsum_cols(k.expect("at least one knot"));

        Ok(EstimatorNodes {
            latent,
            x_recon,
            tau,
            p,
        })
    }

    /// Control points and cumulative selectivities for a batch of query
    /// objects.
    pub fn predict_tau_p(&self, xs: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        self.check_width(xs.cols())?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(xs.clone());
        let nodes = self.forward_on_tape(&mut tape, &vars, x)?;
        Ok((tape.value(nodes.tau).clone(), tape.value(nodes.p).clone()))
    }

    /// Estimated selectivities for a batch of (x, t) queries, plus whether any
    /// threshold had to be clamped to the knot range.
    pub fn predict(&self, xs: &Tensor2, ts: &[f64]) -> Result<(Vec<f64>, bool)> {
        if ts.len() != xs.rows() {
            return Err(Error::Shape(format!(
                "{} thresholds for {} rows",
                ts.len(),
                xs.rows()
            )));
        }
        let (tau, p) = self.predict_tau_p(xs)?;
        let mut out = Vec::with_capacity(ts.len());
        let mut clamped = false;
        for r in 0..xs.rows() {
            let (y, c) = interpolate(tau.row(r), p.row(r), ts[r]);
            clamped |= c;
            out.push(y);
        }
        Ok((out, clamped))
    }

    /// Joint loss on a labeled batch: squared error on log1p counts plus the
    /// weighted reconstruction error.
    pub fn estimator_loss(&self, batch: &[(&[f64], f64, f64)]) -> Result<LossBreakdown> {
        let (xs, ts, ys) = batch_tensors(batch, self.input_width)?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(xs);
        let nodes = self.forward_on_tape(&mut tape, &vars, x)?;
        let refs = self.loss_on_tape(&mut tape, x, &nodes, &ts, &ys)?;
        Ok(LossBreakdown {
            total: tape.value(refs.total).scalar_value(),
            est: tape.value(refs.est).scalar_value(),
            ae: tape.value(refs.ae).scalar_value(),
        })
    }

    fn loss_on_tape(
        &self,
        tape: &mut Tape,
        x: NodeId,
        nodes: &EstimatorNodes,
        ts: &[f64],
        ys: &[f64],
    ) -> Result<LossNodes> {
        let y_hat = tape.interpolate(nodes.tau, nodes.p, ts)?;
        let y_hat_log = tape.log1p(y_hat);
        let y_log = tape.leaf(Tensor2::from_vec(
            ts.len(),
            1,
            ys.iter().map(|y| y.ln_1p()).collect(),
        )?);
        let diff = tape.sub(y_log, y_hat_log)?;
        let sq = tape.square(diff);
        let est = tape.mean_all(sq);

        let recon_diff = tape.sub(x, nodes.x_recon)?;
        let recon_sq = tape.square(recon_diff);
        let ae = tape.mean_all(recon_sq);

        let ae_scaled = tape.scale(ae, self.lambda_ae);
        let total = tape.add(est, ae_scaled)?;
        Ok(LossNodes { total, est, ae })
    }

    /// Mean J_est over a whole labeled workload, without updating anything.
    pub fn mean_est_loss(&self, workload: &Workload) -> Result<f64> {
        let batch = workload.labeled()?;
        if batch.is_empty() {
            return Err(Error::Argument("empty workload".into()));
        }
        Ok(self.estimator_loss(&batch)?.est)
    }

    /// Analytic gradients of the joint loss with respect to every
    /// parameter, in [`params`](Self::params) order.
    pub fn loss_gradients(&self, batch: &[(&[f64], f64, f64)]) -> Result<Vec<Tensor2>> {
        let (xs, ts, ys) = batch_tensors(batch, self.input_width)?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(xs);
        let nodes = self.forward_on_tape(&mut tape, &vars, x)?;
        let refs = self.loss_on_tape(&mut tape, x, &nodes, &ts, &ys)?;
        let grads = tape.backward(refs.total)?;
        Ok(vars.param_ids().iter().map(|&id| grads.wrt(id)).collect())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut ps = self.encoder.params_mut();
        ps.extend(self.decoder.params_mut());
        ps.extend(self.tau_head.params_mut());
        ps.extend(self.p_embed.params_mut());
        ps.push(&mut self.p_proj_w);
        ps.push(&mut self.p_proj_b);
        ps
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        let mut ps = self.encoder.params();
        ps.extend(self.decoder.params());
        ps.extend(self.tau_head.params());
        ps.extend(self.p_embed.params());
        ps.push(&self.p_proj_w);
        ps.push(&self.p_proj_b);
        ps
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<SelEstimator> {
        let m: SelEstimator = serde_json::from_str(s)?;
        if m.version != ESTIMATOR_VERSION {
            return Err(Error::Config(format!(
                "estimator version {} not supported (expected {ESTIMATOR_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }
}

struct LossNodes {
    total: NodeId,
    est: NodeId,
    ae: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub est: f64,
    pub ae: f64,
}

/// Piecewise-linear read-out of a (tau, p) polyline; the flag reports a
/// threshold clamped to the nearest endpoint.
pub fn interpolate(tau: &[f64], p: &[f64], t: f64) -> (f64, bool) {
    crate::nn::interp_row(tau, p, t)
}

/// Per-epoch training trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorTrainReport {
    /// Mean J_est over the workload before the first joint update (the
    /// autoencoder pretraining has already run).
    pub initial_j_est: f64,
    pub final_j_est: f64,
    pub epoch_j_est: Vec<f64>,
    pub initial_recon_mse: f64,
    pub final_recon_mse: f64,
}

fn batch_tensors(
    batch: &[(&[f64], f64, f64)],
    width: usize,
) -> Result<(Tensor2, Vec<f64>, Vec<f64>)> {
    let mut data = Vec::with_capacity(batch.len() * width);
    let mut ts = Vec::with_capacity(batch.len());
    let mut ys = Vec::with_capacity(batch.len());
    for (x, t, y) in batch {
        if x.len() != width {
            return Err(Error::Shape(format!(
                "query width {} vs expected {width}",
                x.len()
            )));
        }
        data.extend_from_slice(x);
        ts.push(*t);
        ys.push(*y);
    }
    Ok((Tensor2::from_vec(batch.len(), width, data)?, ts, ys))
}

/// Train an estimator on a labeled workload: autoencoder pretraining first,
/// then joint epochs over the combined loss. The returned model is meant to
/// be frozen by the caller; nothing in this crate updates it afterwards.
pub fn train_estimator<R: Rng + ?Sized>(
    workload: &Workload,
    config: &SelEstimatorConfig,
    rng: &mut R,
) -> Result<(SelEstimator, EstimatorTrainReport)> {
    let labeled = workload.labeled()?;
    if labeled.is_empty() {
        return Err(Error::Argument("cannot train on an empty workload".into()));
    }
    let width = labeled[0].0.len();
    let mut model = SelEstimator::new(width, workload.t_max, workload.distance, config, rng);

    let n = labeled.len();
    let mut order: Vec<usize> = (0..n).collect();
    let batch_size = config.batch_size.max(1);

    // phase 1: autoencoder pretraining on reconstruction only
    let ae_shapes: Vec<(usize, usize)> = model
        .encoder
        .params()
        .iter()
        .chain(model.decoder.params().iter())
        .map(|p| p.shape())
        .collect();
    let mut ae_opt = AdamState::new(&ae_shapes, config.lr, config.beta1, config.beta2);
    let initial_recon_mse = recon_mse(&model, &labeled)?;
    for _ in 0..config.ae_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&[f64], f64, f64)> = chunk.iter().map(|&i| labeled[i]).collect();
            let (xs, _, _) = batch_tensors(&batch, width)?;
            let mut tape = Tape::new();
            let enc_vars = model.encoder.register(&mut tape);
            let dec_vars = model.decoder.register(&mut tape);
            let x = tape.leaf(xs);
            let z = enc_vars.forward(&mut tape, x)?;
            let recon = dec_vars.forward(&mut tape, z)?;
            let diff = tape.sub(x, recon)?;
            let sq = tape.square(diff);
            let loss = tape.mean_all(sq);
            let grads = tape.backward(loss)?;
            let ids: Vec<NodeId> = enc_vars
                .param_ids()
                .into_iter()
                .chain(dec_vars.param_ids())
                .collect();
            let gs: Vec<Tensor2> = ids.iter().map(|&id| grads.wrt(id)).collect();
            let mut params = model.encoder.params_mut();
            params.extend(model.decoder.params_mut());
            adam_step(&mut params, &gs, &mut ae_opt)?;
        }
    }
    let pretrained_recon_mse = recon_mse(&model, &labeled)?;

    // phase 2: joint training of every parameter under the combined loss
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|p| p.shape()).collect();
    let mut opt = AdamState::new(&shapes, config.lr, config.beta1, config.beta2);
    let initial_j_est = model.estimator_loss(&labeled)?.est;
    let mut epoch_j_est = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_est = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&[f64], f64, f64)> = chunk.iter().map(|&i| labeled[i]).collect();
            let (xs, ts, ys) = batch_tensors(&batch, width)?;
            let mut tape = Tape::new();
            let vars = model.register(&mut tape);
            let x = tape.leaf(xs);
            let nodes = model.forward_on_tape(&mut tape, &vars, x)?;
            let refs = model.loss_on_tape(&mut tape, x, &nodes, &ts, &ys)?;
            let grads = tape.backward(refs.total)?;
            let ids = vars.param_ids();
            let gs: Vec<Tensor2> = ids.iter().map(|&id| grads.wrt(id)).collect();
            adam_step(&mut model.params_mut(), &gs, &mut opt)?;
            epoch_est += tape.value(refs.est).scalar_value();
            batches += 1;
        }
        epoch_j_est.push(epoch_est / batches.max(1) as f64);
    }
    let final_j_est = model.estimator_loss(&labeled)?.est;

    Ok((
        model,
        EstimatorTrainReport {
            initial_j_est,
            final_j_est,
            epoch_j_est,
            initial_recon_mse,
            final_recon_mse: pretrained_recon_mse,
        },
    ))
}

fn recon_mse(model: &SelEstimator, labeled: &[(&[f64], f64, f64)]) -> Result<f64> {
    let (xs, _, _) = batch_tensors(labeled, model.input_width)?;
    let (_, recon) = model.ae_forward(&xs)?;
    let diff = xs.zip_map(&recon, |a, b| (a - b) * (a - b));
    Ok(diff.data().iter().sum::<f64>() / diff.data().len() as f64)
}

/// Reported selectivity error of a frozen model on labeled queries, on raw
/// counts.
pub fn selectivity_mse(queries: &[(&[f64], f64, f64)], model: &SelEstimator) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Argument("empty query batch".into()));
    }
    let (xs, ts, ys) = batch_tensors(queries, model.input_width)?;
    let (y_hat, _) = model.predict(&xs, &ts)?;
    let mse = ys
        .iter()
        .zip(&y_hat)
        .map(|(y, yh)| (y - yh) * (y - yh))
        .sum::<f64>()
        / ys.len() as f64;
    Ok(mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_train_workload, WorkloadSource, WORKLOAD_VERSION};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tiny_config() -> SelEstimatorConfig {
        SelEstimatorConfig {
            partitions: 3,
            latent_dim: 4,
            hidden: 8,
            embed_dim: 3,
            lambda_ae: 0.1,
            ae_epochs: 5,
            epochs: 10,
            batch_size: 16,
            ..SelEstimatorConfig::default()
        }
    }

    fn tiny_model(seed: u64) -> SelEstimator {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        SelEstimator::new(5, 2.0, DistanceKind::Euclidean, &tiny_config(), &mut rng)
    }

    #[test]
    fn ae_forward_is_finite_on_zero_input() {
        let model = tiny_model(1);
        let x = Tensor2::zeros(3, 5);
        let (z, recon) = model.ae_forward(&x).unwrap();
        assert!(z.all_finite());
        assert!(recon.all_finite());
        assert_eq!(z.cols(), 4);
        assert_eq!(recon.cols(), 5);
    }

    #[test]
    fn ae_forward_rejects_wrong_width() {
        let model = tiny_model(1);
        assert!(model.ae_forward(&Tensor2::zeros(1, 7)).is_err());
    }

    #[test]
    fn tau_has_fixed_endpoints_and_increases() {
        let model = tiny_model(2);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut xs = Tensor2::zeros(32, 5);
        for v in xs.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let (tau, p) = model.predict_tau_p(&xs).unwrap();
        let end = model.t_max + model.epsilon;
        for r in 0..32 {
            let row = tau.row(r);
            assert_eq!(row[0], 0.0);
            assert_eq!(*row.last().unwrap(), end);
            for i in 1..row.len() {
                assert!(row[i] > row[i - 1], "tau not strictly increasing: {row:?}");
            }
            let ps = p.row(r);
            assert!(ps[0] >= 0.0);
            for i in 1..ps.len() {
                assert!(ps[i] >= ps[i - 1], "p not nondecreasing: {ps:?}");
            }
        }
    }

    #[test]
    fn predictions_nondecreasing_in_threshold() {
        let model = tiny_model(4);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xs = Tensor2::from_rows(&[x.clone(), x]).unwrap();
            let t1 = rng.gen_range(0.0..2.0);
            let t2 = t1 + rng.gen_range(0.0..0.5);
            let (ys, _) = model.predict(&xs, &[t1, t2]).unwrap();
            assert!(ys[0] <= ys[1] + 1e-12);
        }
    }

    #[test]
    fn interpolation_exact_at_knots() {
        let model = tiny_model(6);
        let xs = Tensor2::from_rows(&[vec![0.3, -0.4, 0.1, 0.9, -1.2]]).unwrap();
        let (tau, p) = model.predict_tau_p(&xs).unwrap();
        for i in 0..tau.cols() {
            let (y, _) = interpolate(tau.row(0), p.row(0), tau.get(0, i));
            assert!(
                (y - p.get(0, i)).abs() <= 1e-9,
                "knot {i}: {y} vs {}",
                p.get(0, i)
            );
        }
    }

    #[test]
    fn hand_set_heads_match_hand_computation() {
        // L = 1 keeps the arithmetic small: 3 knots
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let config = SelEstimatorConfig {
            partitions: 1,
            latent_dim: 1,
            hidden: 1,
            embed_dim: 1,
            ..tiny_config()
        };
        let mut model = SelEstimator::new(1, 10.0, DistanceKind::Euclidean, &config, &mut rng);
        model.epsilon = 0.0;

        // encoder/decoder: z = 0 regardless of input
        zero(&mut model.encoder);
        zero(&mut model.decoder);
        // tau head: raw = [0, 0, ln(e - 1)] so softplus gives [ln2, ln2, 1];
        // cumsum c = [ln2, 2ln2, 2ln2 + 1]; rescaled by 10/(ln2 + 1)
        zero(&mut model.tau_head);
        set_head(&mut model.tau_head, &[0.0, 0.0, (std::f64::consts::E - 1.0).ln()]);
        // p embed: h = [1, 1, 1] (bias), projection w = 0, b = [2, 3, 4]
        zero(&mut model.p_embed);
        set_head(&mut model.p_embed, &[1.0, 1.0, 1.0]);
        model.p_proj_w = Tensor2::zeros(1, 3);
        model.p_proj_b = Tensor2::from_vec(1, 3, vec![2.0, 3.0, 4.0]).unwrap();

        let xs = Tensor2::from_rows(&[vec![0.5]]).unwrap();
        let (tau, p) = model.predict_tau_p(&xs).unwrap();

        let ln2 = std::f64::consts::LN_2;
        let gap = KNOT_GAP;
        let span = ln2 + 1.0 + 2.0 * gap;
        let expect_tau = [0.0, (ln2 + gap) / span * 10.0, 10.0];
        for (got, want) in tau.row(0).iter().zip(expect_tau) {
            assert!((got - want).abs() < 1e-9, "tau {got} vs {want}");
        }
        // k = relu(0 + b) = [2, 3, 4]; p = [2, 5, 9]
        let expect_p = [2.0, 5.0, 9.0];
        for (got, want) in p.row(0).iter().zip(expect_p) {
            assert!((got - want).abs() < 1e-12, "p {got} vs {want}");
        }
    }

    fn zero(mlp: &mut Mlp) {
        for p in mlp.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
    }

    fn set_head(mlp: &mut Mlp, bias: &[f64]) {
        let last = mlp.layers.last_mut().unwrap();
        last.bias = Tensor2::from_vec(1, bias.len(), bias.to_vec()).unwrap();
    }

    #[test]
    fn loss_zero_on_perfect_predictions() {
        // a model with hand-set constant outputs cannot reconstruct x, so
        // check the two loss terms separately through the lambda switch
        let model = tiny_model(8);
        let xs = Tensor2::from_rows(&[vec![0.1, 0.2, -0.3, 0.4, 0.0]]).unwrap();
        let (y_hat, _) = model.predict(&xs, &[1.0]).unwrap();
        let batch: Vec<(&[f64], f64, f64)> = vec![(xs.row(0), 1.0, y_hat[0])];
        let losses = model.estimator_loss(&batch).unwrap();
        assert!(losses.est.abs() < 1e-18, "est loss {}", losses.est);
        // lambda = 0 collapses the total onto the estimation term
        let mut no_ae = model.clone();
        no_ae.lambda_ae = 0.0;
        let l0 = no_ae.estimator_loss(&batch).unwrap();
        assert_eq!(l0.total, l0.est);
    }

    #[test]
    fn single_query_loss_by_hand() {
        let model = tiny_model(9);
        let xs = Tensor2::from_rows(&[vec![0.1, 0.2, -0.3, 0.4, 0.0]]).unwrap();
        let (y_hat, _) = model.predict(&xs, &[0.5]).unwrap();
        let y = 7.0;
        let batch: Vec<(&[f64], f64, f64)> = vec![(xs.row(0), 0.5, y)];
        let losses = model.estimator_loss(&batch).unwrap();
        let expect_est = (y.ln_1p() - y_hat[0].ln_1p()).powi(2);
        assert!((losses.est - expect_est).abs() < 1e-12);
        let (_, recon) = model.ae_forward(&xs).unwrap();
        let expect_ae = xs
            .data()
            .iter()
            .zip(recon.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 5.0;
        assert!((losses.total - (expect_est + 0.1 * expect_ae)).abs() < 1e-12);
    }

    #[test]
    fn selectivity_mse_identities() {
        let model = tiny_model(10);
        let xs = Tensor2::from_rows(&[vec![0.0; 5], vec![0.5; 5], vec![-0.5; 5]]).unwrap();
        let ts = [0.4, 0.9, 1.4];
        let (y_hat, _) = model.predict(&xs, &ts).unwrap();
        // y = y_hat everywhere -> 0
        let exact: Vec<(&[f64], f64, f64)> = (0..3).map(|i| (xs.row(i), ts[i], y_hat[i])).collect();
        assert_eq!(selectivity_mse(&exact, &model).unwrap(), 0.0);
        // constant offset c -> c^2
        let offset: Vec<(&[f64], f64, f64)> =
            (0..3).map(|i| (xs.row(i), ts[i], y_hat[i] + 2.0)).collect();
        assert!((selectivity_mse(&offset, &model).unwrap() - 4.0).abs() < 1e-9);
        assert!(matches!(
            selectivity_mse(&[], &model),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        let mut model = tiny_model(11);
        let xs = Tensor2::from_rows(&[
            vec![0.3, -0.2, 0.5, 0.1, -0.4],
            vec![-0.6, 0.4, 0.0, 0.8, 0.2],
        ])
        .unwrap();
        let ts = vec![0.7, 1.3];
        let ys = vec![4.0, 9.0];

        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let x = tape.leaf(xs.clone());
        let nodes = model.forward_on_tape(&mut tape, &vars, x).unwrap();
        let refs = model.loss_on_tape(&mut tape, x, &nodes, &ts, &ys).unwrap();
        let grads = tape.backward(refs.total).unwrap();
        let ids = vars.param_ids();
        let analytic: Vec<Tensor2> = ids.iter().map(|&id| grads.wrt(id)).collect();

        let loss_of = |model: &SelEstimator| {
            let batch: Vec<(&[f64], f64, f64)> = vec![
                (xs.row(0), ts[0], ys[0]),
                (xs.row(1), ts[1], ys[1]),
            ];
            model.estimator_loss(&batch).unwrap().total
        };

        let step = 1e-5;
        let n_params = analytic.len();
        let mut checked = 0;
        for pi in 0..n_params {
            let entries = analytic[pi].data().len();
            // probe a few entries per parameter to keep the test quick
            for e in (0..entries).step_by(entries.max(7) / 7) {
                let orig = model.params()[pi].data()[e];
                model.params_mut()[pi].data_mut()[e] = orig + step;
                let fp = loss_of(&model);
                model.params_mut()[pi].data_mut()[e] = orig - step;
                let fm = loss_of(&model);
                model.params_mut()[pi].data_mut()[e] = orig;
                let numeric = (fp - fm) / (2.0 * step);
                let a = analytic[pi].data()[e];
                let scale = a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    (a - numeric).abs() / scale <= 1e-4,
                    "param {pi} entry {e}: {a} vs {numeric}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 100, "only {checked} probes");
    }

    #[test]
    fn constant_label_workload_fits_constant() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        // all rows identical => every label equals the row count
        let d = Tensor2::from_rows(&vec![vec![0.5, -0.5]; 30]).unwrap();
        let w = build_train_workload(&d, 2, 1.0, &mut rng).unwrap();
        assert!(w.queries.iter().all(|q| q.y.unwrap() == 30.0));
        let config = SelEstimatorConfig {
            partitions: 4,
            latent_dim: 2,
            hidden: 16,
            embed_dim: 4,
            ae_epochs: 20,
            epochs: 300,
            batch_size: 16,
            lr: 1e-2,
            ..SelEstimatorConfig::default()
        };
        let (model, report) = train_estimator(&w, &config, &mut rng).unwrap();
        assert!(
            report.final_recon_mse < report.initial_recon_mse,
            "pretraining did not improve reconstruction: {} -> {}",
            report.initial_recon_mse,
            report.final_recon_mse
        );
        let labeled = w.labeled().unwrap();
        for (x, t, y) in &labeled {
            let xs = Tensor2::from_rows(&[x.to_vec()]).unwrap();
            let (y_hat, _) = model.predict(&xs, &[*t]).unwrap();
            assert!(
                (y_hat[0] - y).abs() <= 0.1 * y,
                "predicted {} for label {y}",
                y_hat[0]
            );
        }
    }

    #[test]
    fn training_rejects_empty_workload() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let w = Workload {
            version: WORKLOAD_VERSION,
            distance: DistanceKind::Euclidean,
            t_max: 1.0,
            source: WorkloadSource::Train,
            queries: vec![],
        };
        assert!(matches!(
            train_estimator(&w, &tiny_config(), &mut rng),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let model = tiny_model(14);
        let json = model.to_json().unwrap();
        let back = SelEstimator::from_json(&json).unwrap();
        let xs = Tensor2::from_rows(&[vec![0.2, -0.1, 0.4, 0.0, 0.9]]).unwrap();
        let (a, _) = model.predict(&xs, &[0.8]).unwrap();
        let (b, _) = back.predict(&xs, &[0.8]).unwrap();
        assert_eq!(a, b);
    }
}

//! Generator/critic pair and sampling from a trained generator.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::cond::{sample_condition_with, CondLaw, CondLayout};
use crate::gan::space::GanSpace;
use crate::nn::tape::NodeId;
use crate::nn::{Activation, Mlp, Tape, Tensor2};
use crate::table::RawTable;
use crate::transform::matrix::{inverse_transform, Layout, SegmentKind};
use crate::transform::schema::TableSchema;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Weight of the selectivity term in the generator loss; 0 is the
    /// ablation arm.
    pub alpha: f64,
    pub k_critic: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub gp_weight: f64,
    pub conditional: bool,
    /// Weight of the condition-matching cross entropy.
    pub cond_loss_weight: f64,
    /// Global-norm cap on the generator gradient; 0 disables clipping.
    pub gen_grad_clip: f64,
    /// Cap on the selectivity term's gradient norm as a multiple of the
    /// adversarial gradient norm; 0 disables balancing. The raw-count scale
    /// of the selectivity error can dwarf the adversarial term by orders of
    /// magnitude, and an unchecked pull drives the generator off the data
    /// manifold into regions where predicted and actual selectivity agree
    /// vacuously.
    pub sel_grad_balance: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            noise_dim: 128,
            gen_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            alpha: 0.01,
            k_critic: 5,
            batch_size: 500,
            epochs: 300,
            gp_weight: 10.0,
            conditional: true,
            cond_loss_weight: 1.0,
            gen_grad_clip: 5.0,
            sel_grad_balance: 1.0,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
        }
    }
}

pub const GAN_VERSION: u32 = 1;

/// Generator and critic with the layouts they were built around.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanModel {
    pub version: u32,
    pub generator: Mlp,
    pub critic: Mlp,
    pub layout: Layout,
    pub gan_space: GanSpace,
    pub cond_layout: CondLayout,
    pub config: GanConfig,
}

impl GanModel {
    pub fn new<R: Rng + ?Sized>(
        schema: &TableSchema,
        config: &GanConfig,
        rng: &mut R,
    ) -> GanModel {
        let layout = Layout::of(schema);
        let cond_layout = CondLayout::of(schema);
        let gan_space = GanSpace::of(schema, &layout);
        let cond_width = if config.conditional { cond_layout.width } else { 0 };

        let mut gen_dims = vec![config.noise_dim + cond_width];
        gen_dims.extend(&config.gen_hidden);
        gen_dims.push(layout.width);
        let generator = Mlp::new(&gen_dims, Activation::Relu, Activation::Identity, rng);

        let mut critic_dims = vec![layout.width + cond_width];
        critic_dims.extend(&config.critic_hidden);
        critic_dims.push(1);
        let critic = Mlp::new(
            &critic_dims,
            Activation::LeakyRelu,
            Activation::Identity,
            rng,
        );

        GanModel {
            version: GAN_VERSION,
            generator,
            critic,
            layout,
            gan_space,
            cond_layout,
            config: config.clone(),
        }
    }

    /// Width of the cond slice fed to both nets (0 when unconditional).
    pub fn cond_width(&self) -> usize {
        if self.config.conditional {
            self.cond_layout.width
        } else {
            0
        }
    }

    pub fn is_conditional(&self) -> bool {
        self.config.conditional && self.cond_layout.width > 0
    }

    /// Segment-wise output activations over the generator's linear output:
    /// tanh on alpha scalars, softmax over each one-hot segment, identity on
    /// ordinal scalars.
    pub fn output_activations(&self, tape: &mut Tape, linear: NodeId) -> Result<NodeId> {
        let mut out: Option<NodeId> = None;
        for seg in &self.layout.segments {
            let slice = tape.slice_cols(linear, seg.start, seg.width)?;
            let activated = match seg.kind {
                SegmentKind::Alpha => tape.activation(slice, Activation::Tanh),
                SegmentKind::Beta | SegmentKind::Nominal => tape.softmax_rows(slice),
                SegmentKind::Ordinal => slice,
            };
            out = Some(match out {
                None => activated,
                Some(prev) => tape.concat_cols(prev, activated)?,
            });
        }
        out.ok_or_else(|| Error::Layout("empty layout".into()))
    }

    /// Noise batch for the generator.
    pub fn draw_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Tensor2 {
        let mut z = Tensor2::zeros(batch, self.config.noise_dim);
        for v in z.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        z
    }

    /// Forward a noise+cond batch through the generator (no gradients kept),
    /// producing gan-space rows.
    pub fn generate_gan_rows(&self, noise: &Tensor2, cond: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let vars = self.generator.register(&mut tape);
        let input = self.concat_cond_input(&mut tape, noise, cond)?;
        let linear = vars.forward(&mut tape, input)?;
        let out = self.output_activations(&mut tape, linear)?;
        Ok(tape.value(out).clone())
    }

    fn concat_cond_input(
        &self,
        tape: &mut Tape,
        noise: &Tensor2,
        cond: &Tensor2,
    ) -> Result<NodeId> {
        let z = tape.leaf(noise.clone());
        if self.cond_width() == 0 {
            return Ok(z);
        }
        if cond.cols() != self.cond_width() {
            return Err(Error::Shape(format!(
                "cond width {} vs expected {}",
                cond.cols(),
                self.cond_width()
            )));
        }
        let c = tape.leaf(cond.clone());
        tape.concat_cols(z, c)
    }

    /// Sample conditions for a batch; all-zero when unconditional.
    pub fn draw_conditions<R: Rng + ?Sized>(
        &self,
        schema: &TableSchema,
        batch: usize,
        law: CondLaw,
        rng: &mut R,
    ) -> (Tensor2, Vec<Option<crate::gan::cond::ConditionDraw>>) {
        let width = self.cond_width();
        let mut cond = Tensor2::zeros(batch, width);
        let mut draws = Vec::with_capacity(batch);
        if !self.is_conditional() {
            draws.resize(batch, None);
            return (cond, draws);
        }
        for r in 0..batch {
            let draw = sample_condition_with(schema, law, rng);
            if let Some(d) = draw {
                let span = self
                    .cond_layout
                    .columns
                    .iter()
                    .find(|c| c.column == d.column)
                    .expect("draw comes from the same schema");
                cond.set(r, span.start + d.category, 1.0);
            }
            draws.push(draw);
        }
        (cond, draws)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<GanModel> {
        let m: GanModel = serde_json::from_str(s)?;
        if m.version != GAN_VERSION {
            return Err(Error::Config(format!(
                "gan checkpoint version {} not supported (expected {GAN_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }
}

/// Sample a synthetic raw table from a trained generator. One-hot segments
/// harden by argmax inside the inverse transform.
pub fn generate<R: Rng + ?Sized>(
    model: &GanModel,
    schema: &TableSchema,
    n: usize,
    rng: &mut R,
) -> Result<RawTable> {
    let gan_rows = generate_transformed(model, schema, n, rng)?;
    inverse_transform(&gan_rows, schema)
}

/// As [`generate`] but stopping in the raw transformed space.
pub fn generate_transformed<R: Rng + ?Sized>(
    model: &GanModel,
    schema: &TableSchema,
    n: usize,
    rng: &mut R,
) -> Result<Tensor2> {
    let width = model.layout.width;
    let mut data = Vec::with_capacity(n * width);
    let batch_size = model.config.batch_size.max(1);
    let mut remaining = n;
    while remaining > 0 {
        let b = remaining.min(batch_size);
        let (cond, _) = model.draw_conditions(schema, b, CondLaw::Frequency, rng);
        let noise = model.draw_noise(b, rng);
        let gan_rows = model.generate_gan_rows(&noise, &cond)?;
        let raw_rows = model.gan_space.to_raw(&gan_rows);
        data.extend_from_slice(raw_rows.data());
        remaining -= b;
    }
    Tensor2::from_vec(n, width, data)
}

//! Run configuration: a versioned TOML file, with per-flag overrides applied
//! on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use selsynth::estimator::SelEstimatorConfig;
use selsynth::eval::TaskSpec;
use selsynth::gan::GanConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    /// CSV dataset with a header row.
    pub dataset: PathBuf,
    /// Column declaration file.
    pub schema: PathBuf,
    /// Where artifacts land.
    pub out_dir: PathBuf,
    /// Worker-thread cap; 0 keeps the default pool.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub gan: GanSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub ablate: AblateSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSection {
    pub partitions: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub lambda_ae: f64,
    pub ae_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Thresholds drawn per training query object.
    pub thresholds_per_object: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let c = SelEstimatorConfig::default();
        EstimatorSection {
            partitions: c.partitions,
            latent_dim: c.latent_dim,
            hidden: c.hidden,
            embed_dim: c.embed_dim,
            lambda_ae: c.lambda_ae,
            ae_epochs: c.ae_epochs,
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            thresholds_per_object: 2,
        }
    }
}

impl EstimatorSection {
    pub fn to_config(&self) -> SelEstimatorConfig {
        SelEstimatorConfig {
            partitions: self.partitions,
            latent_dim: self.latent_dim,
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            lambda_ae: self.lambda_ae,
            ae_epochs: self.ae_epochs,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            ..SelEstimatorConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GanSection {
    pub alpha: f64,
    pub noise_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub k_critic: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub gp_weight: f64,
    pub conditional: bool,
    pub cond_loss_weight: f64,
    pub lr: f64,
}

impl Default for GanSection {
    fn default() -> Self {
        let c = GanConfig::default();
        GanSection {
            alpha: c.alpha,
            noise_dim: c.noise_dim,
            gen_hidden: c.gen_hidden,
            critic_hidden: c.critic_hidden,
            k_critic: c.k_critic,
            batch_size: c.batch_size,
            epochs: c.epochs,
            gp_weight: c.gp_weight,
            conditional: c.conditional,
            cond_loss_weight: c.cond_loss_weight,
            lr: c.lr,
        }
    }
}

impl GanSection {
    pub fn to_config(&self) -> GanConfig {
        GanConfig {
            alpha: self.alpha,
            noise_dim: self.noise_dim,
            gen_hidden: self.gen_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
            k_critic: self.k_critic,
            batch_size: self.batch_size,
            epochs: self.epochs,
            gp_weight: self.gp_weight,
            conditional: self.conditional,
            cond_loss_weight: self.cond_loss_weight,
            lr: self.lr,
            ..GanConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub num_queries: usize,
    pub repeats: usize,
    pub task: Option<TaskSpec>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            num_queries: 1000,
            repeats: 10,
            task: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateSection {
    pub seeds: Vec<u64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if config.version != CONFIG_VERSION {
            bail!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                config.version
            );
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gan.alpha < 0.0 {
            bail!("gan.alpha must be nonnegative");
        }
        for (name, v) in [
            ("estimator.partitions", self.estimator.partitions),
            ("estimator.epochs", self.estimator.epochs),
            ("estimator.batch_size", self.estimator.batch_size),
            ("estimator.thresholds_per_object", self.estimator.thresholds_per_object),
            ("gan.k_critic", self.gan.k_critic),
            ("gan.batch_size", self.gan.batch_size),
            ("gan.epochs", self.gan.epochs),
            ("gan.noise_dim", self.gan.noise_dim),
            ("eval.num_queries", self.eval.num_queries),
            ("eval.repeats", self.eval.repeats),
        ] {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        Ok(())
    }

    /// The exact configuration snapshot recorded in the manifest.
    pub fn snapshot_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"
version = 1
seed = 42
dataset = "data/toy.csv"
schema = "data/toy.schema.toml"
out_dir = "runs/toy"
"#;
        let c: PipelineConfig = toml::from_str(text).unwrap();
        assert_eq!(c.gan.batch_size, 500);
        assert_eq!(c.gan.epochs, 300);
        assert_eq!(c.estimator.batch_size, 512);
        assert_eq!(c.estimator.epochs, 120);
        assert_eq!(c.estimator.ae_epochs, 100);
        assert_eq!(c.eval.num_queries, 1000);
        assert_eq!(c.eval.repeats, 10);
        assert!((c.gan.alpha - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_counts_are_rejected() {
        let text = r#"
version = 1
seed = 1
dataset = "x.csv"
schema = "x.toml"
out_dir = "runs"

[gan]
epochs = 0
"#;
        let c: PipelineConfig = toml::from_str(text).unwrap();
        assert!(c.validate().is_err());
    }
}

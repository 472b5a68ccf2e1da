//! Paired with/without-supervision comparison: train two generators per seed
//! that differ only in the selectivity weight, evaluate both against the same
//! frozen estimator, and summarize the change.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{train_estimator, SelEstimator, SelEstimatorConfig};
use crate::eval::learners::{ml_utility, MlUtilityReport, TaskSpec};
use crate::eval::metrics::selectivity_mse_eval;
use crate::gan::model::{generate, GanConfig, GanModel};
use crate::gan::train::{GanTrainer, SelSupervision};
use crate::oracle::{build_train_workload, estimate_t_max};
use crate::rng::stream;
use crate::table::RawTable;
use crate::transform::schema::TableSchema;
use crate::transform::transform;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOptions {
    pub estimator: SelEstimatorConfig,
    /// Shared base configuration; `alpha` is the treatment arm's weight, the
    /// control arm runs the identical configuration with `alpha = 0`.
    pub gan: GanConfig,
    pub thresholds_per_object: usize,
    pub num_queries: usize,
    pub repeats: usize,
    pub task: Option<TaskSpec>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub alpha: f64,
    pub sel_mse: f64,
    pub sel_mse_repeats: Vec<f64>,
    pub repeated_rate: f64,
    pub ml: Option<MlUtilityReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationSeedResult {
    pub seed: u64,
    pub with_sel: ArmResult,
    pub without_sel: ArmResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub per_seed: Vec<AblationSeedResult>,
    /// Mean over seeds of (without - with) / without; positive means the
    /// supervised arm reduced the selectivity error.
    pub mean_relative_reduction: f64,
    pub wins: usize,
}

/// Run the paired protocol over the given seeds. Both arms of one seed share
/// the estimator, the oracle data, and every random stream except the
/// supervised arm's threshold stream.
pub fn ablation_compare(
    table: &RawTable,
    schema: &TableSchema,
    options: &AblationOptions,
) -> Result<AblationReport> {
    let mut per_seed = Vec::with_capacity(options.seeds.len());
    for &seed in &options.seeds {
        per_seed.push(run_seed(table, schema, options, seed)?);
    }
    let mut reduction = 0.0;
    let mut wins = 0;
    for r in &per_seed {
        if r.without_sel.sel_mse > 0.0 {
            reduction += (r.without_sel.sel_mse - r.with_sel.sel_mse) / r.without_sel.sel_mse;
        }
        if r.with_sel.sel_mse < r.without_sel.sel_mse {
            wins += 1;
        }
    }
    Ok(AblationReport {
        mean_relative_reduction: reduction / per_seed.len().max(1) as f64,
        wins,
        per_seed,
    })
}

fn run_seed(
    table: &RawTable,
    schema: &TableSchema,
    options: &AblationOptions,
    seed: u64,
) -> Result<AblationSeedResult> {
    let matrix = transform(table, schema)?;
    let mut oracle_rng = stream(seed, "ablate/oracle");
    let t_max = estimate_t_max(&matrix.data, &mut oracle_rng)?;
    let workload = build_train_workload(
        &matrix.data,
        options.thresholds_per_object,
        t_max,
        &mut oracle_rng,
    )?;
    let mut est_rng = stream(seed, "ablate/estimator");
    let (estimator, _) = train_estimator(&workload, &options.estimator, &mut est_rng)?;

    let with_sel = run_arm(
        table,
        schema,
        &matrix,
        &estimator,
        t_max,
        options,
        options.gan.alpha,
        seed,
    )?;
    let without_sel = run_arm(
        table, schema, &matrix, &estimator, t_max, options, 0.0, seed,
    )?;
    Ok(AblationSeedResult {
        seed,
        with_sel,
        without_sel,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_arm(
    table: &RawTable,
    schema: &TableSchema,
    matrix: &crate::transform::matrix::TransformedMatrix,
    estimator: &SelEstimator,
    t_max: f64,
    options: &AblationOptions,
    alpha: f64,
    seed: u64,
) -> Result<ArmResult> {
    let mut config = options.gan.clone();
    config.alpha = alpha;
    let mut init_rng = stream(seed, "ablate/gan-init");
    let model = GanModel::new(schema, &config, &mut init_rng);
    let supervision = SelSupervision {
        estimator,
        d_origin: &matrix.data,
        t_max,
    };
    let mut trainer = GanTrainer::new(model, schema, matrix, Some(supervision), seed)?;
    trainer.train()?;
    let model = trainer.into_model();

    let mut gen_rng = stream(seed, "ablate/generate");
    let synth = generate(&model, schema, table.n_rows(), &mut gen_rng)?;
    let (sel_mse, sel_mse_repeats) = selectivity_mse_eval(
        &synth,
        schema,
        &matrix.data,
        estimator,
        options.num_queries,
        options.repeats,
        seed,
    )?;
    let repeated_rate = crate::eval::metrics::repeated_row_rate(&synth)?;
    let ml = match &options.task {
        Some(task) => Some(ml_utility(table, &synth, schema, task, seed)?),
        None => None,
    };
    Ok(ArmResult {
        alpha,
        sel_mse,
        sel_mse_repeats,
        repeated_rate,
        ml,
    })
}

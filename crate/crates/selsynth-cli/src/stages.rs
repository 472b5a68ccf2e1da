//! Pipeline stages. Each stage reads upstream artifacts from disk, writes
//! exactly one artifact of its own, and never mutates what it read.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use selsynth::estimator::{train_estimator, SelEstimator};
use selsynth::eval::{
    cdf_export, ml_utility, pairwise_correlation_difference, repeated_row_rate,
    selectivity_mse_eval, MlUtilityReport,
};
use selsynth::gan::{generate, GanModel, GanTrainer, SelSupervision};
use selsynth::oracle::{build_train_workload, estimate_t_max};
use selsynth::rng::stream;
use selsynth::table::RawTable;
use selsynth::transform::{transform, TableSchema};

use crate::config::PipelineConfig;
use crate::dataset::{load_dataset, load_schema_decl, write_csv};
use crate::manifest::{combine_hashes, hash_file, Manifest};

pub struct RunPaths {
    pub out_dir: PathBuf,
    pub schema: PathBuf,
    pub workload: PathBuf,
    pub estimator: PathBuf,
    pub gan: PathBuf,
    pub synthetic: PathBuf,
    pub eval_report: PathBuf,
    pub eval_summary: PathBuf,
    pub ablation_report: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path) -> RunPaths {
        RunPaths {
            out_dir: out_dir.to_path_buf(),
            schema: out_dir.join("schema.json"),
            workload: out_dir.join("workload.json"),
            estimator: out_dir.join("estimator.json"),
            gan: out_dir.join("gan.json"),
            synthetic: out_dir.join("synthetic.csv"),
            eval_report: out_dir.join("eval_report.json"),
            eval_summary: out_dir.join("eval_summary.csv"),
            ablation_report: out_dir.join("ablation_report.json"),
            manifest: out_dir.join("manifest.json"),
        }
    }

    pub fn cdf_csv(&self, column: &str) -> PathBuf {
        self.out_dir.join(format!("cdf_{column}.csv"))
    }
}

pub fn load_inputs(config: &PipelineConfig) -> Result<RawTable> {
    let decls = load_schema_decl(&config.schema)?;
    load_dataset(&config.dataset, &decls)
}

fn read_schema(paths: &RunPaths) -> Result<TableSchema> {
    let text = std::fs::read_to_string(&paths.schema)
        .with_context(|| format!("reading {}", paths.schema.display()))?;
    Ok(TableSchema::from_json(&text)?)
}

fn read_estimator(paths: &RunPaths) -> Result<SelEstimator> {
    let text = std::fs::read_to_string(&paths.estimator)
        .with_context(|| format!("reading {}", paths.estimator.display()))?;
    Ok(SelEstimator::from_json(&text)?)
}

fn read_gan(paths: &RunPaths) -> Result<GanModel> {
    let text = std::fs::read_to_string(&paths.gan)
        .with_context(|| format!("reading {}", paths.gan.display()))?;
    Ok(GanModel::from_json(&text)?)
}

pub fn fit_schema(config: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let decls = load_schema_decl(&config.schema)?;
    let table = load_dataset(&config.dataset, &decls)?;
    let mut rng = stream(config.seed, "schema");
    let schema = TableSchema::fit(&table, &decls, &mut rng)?;
    std::fs::write(&paths.schema, schema.to_json()?)
        .with_context(|| format!("writing {}", paths.schema.display()))?;
    eprintln!(
        "fit-schema: {} columns, encoded width {}",
        schema.columns.len(),
        selsynth::transform::Layout::of(&schema).width
    );
    Ok(())
}

pub fn train_sel(config: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let table = load_inputs(config)?;
    let schema = read_schema(paths)?;
    let matrix = transform(&table, &schema)?;
    let mut rng = stream(config.seed, "oracle");
    let t_max = estimate_t_max(&matrix.data, &mut rng)?;
    let workload = build_train_workload(
        &matrix.data,
        config.estimator.thresholds_per_object,
        t_max,
        &mut rng,
    )?;
    std::fs::write(&paths.workload, workload.to_json()?)
        .with_context(|| format!("writing {}", paths.workload.display()))?;

    let mut est_rng = stream(config.seed, "estimator");
    let (model, report) = train_estimator(&workload, &config.estimator.to_config(), &mut est_rng)?;
    std::fs::write(&paths.estimator, model.to_json()?)
        .with_context(|| format!("writing {}", paths.estimator.display()))?;
    eprintln!(
        "train-sel: {} queries, t_max {t_max:.4}, J_est {:.4} -> {:.4}",
        workload.queries.len(),
        report.initial_j_est,
        report.final_j_est
    );
    Ok(())
}

pub fn train_gan(config: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let table = load_inputs(config)?;
    let schema = read_schema(paths)?;
    let matrix = transform(&table, &schema)?;
    let estimator = read_estimator(paths)?;

    let mut init_rng = stream(config.seed, "gan-init");
    let model = GanModel::new(&schema, &config.gan.to_config(), &mut init_rng);
    let t_max = estimator.t_max;
    let supervision = SelSupervision {
        estimator: &estimator,
        d_origin: &matrix.data,
        t_max,
    };
    let mut trainer = GanTrainer::new(model, &schema, &matrix, Some(supervision), config.seed)?;
    let trace = trainer.train()?;
    let model = trainer.into_model();
    std::fs::write(&paths.gan, model.to_json()?)
        .with_context(|| format!("writing {}", paths.gan.display()))?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        eprintln!(
            "train-gan: alpha {}, {} epochs, critic loss {:.4} -> {:.4}, sel loss {:?} -> {:?}",
            config.gan.alpha,
            trace.len(),
            first.critic_loss,
            last.critic_loss,
            first.sel_loss,
            last.sel_loss
        );
    }
    Ok(())
}

pub fn generate_stage(config: &PipelineConfig, paths: &RunPaths, rows: Option<usize>) -> Result<()> {
    let table = load_inputs(config)?;
    let schema = read_schema(paths)?;
    let model = read_gan(paths)?;
    let n = rows.unwrap_or_else(|| table.n_rows());
    let mut rng = stream(config.seed, "generate");
    let synth = generate(&model, &schema, n, &mut rng)?;
    write_csv(&synth, &paths.synthetic)?;
    eprintln!("generate: {n} rows -> {}", paths.synthetic.display());
    Ok(())
}

/// The structured evaluation report persisted for a run. Deterministic given
/// the manifest: no wall-clock content.
#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub version: u32,
    pub seed: u64,
    pub rows_origin: usize,
    pub rows_synth: usize,
    pub repeated_rate_origin: f64,
    pub repeated_rate_synth: f64,
    pub corr_diff: Option<f64>,
    pub corr_warnings: Vec<String>,
    pub sel_mse: f64,
    pub sel_mse_repeats: Vec<f64>,
    pub ml: Option<MlUtilityReport>,
    /// Config snapshot the run actually used, overrides included.
    pub config: PipelineConfig,
}

pub fn evaluate(config: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let table = load_inputs(config)?;
    let schema = read_schema(paths)?;
    let estimator = read_estimator(paths)?;
    let decls = load_schema_decl(&config.schema)?;
    let synth = load_dataset(&paths.synthetic, &decls)
        .with_context(|| "loading the synthetic table; run generate first")?;
    let matrix = transform(&table, &schema)?;

    let t0 = Instant::now();
    let (sel_mse, sel_mse_repeats) = selectivity_mse_eval(
        &synth,
        &schema,
        &matrix.data,
        &estimator,
        config.eval.num_queries,
        config.eval.repeats,
        config.seed,
    )?;
    eprintln!(
        "evaluate: sel_mse {sel_mse:.4} over {} repeats in {:?}",
        config.eval.repeats,
        t0.elapsed()
    );

    let continuous: Vec<&str> = schema
        .columns
        .iter()
        .filter(|c| c.is_continuous())
        .map(|c| c.name.as_str())
        .collect();
    let (corr_diff, corr_warnings) = if continuous.len() >= 2 {
        let (d, w) = pairwise_correlation_difference(&table, &synth, &schema)?;
        (Some(d), w)
    } else {
        (None, Vec::new())
    };

    for name in &continuous {
        let col = table.column_index(name).expect("schema column");
        let points = cdf_export(&table.real_column(col)?, &synth.real_column(col)?)?;
        let path = paths.cdf_csv(name);
        let mut writer = csv::Writer::from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(["value", "f_origin", "f_synth"])?;
        for p in points {
            writer.write_record([
                format!("{:?}", p.value),
                format!("{:?}", p.f_origin),
                format!("{:?}", p.f_synth),
            ])?;
        }
        writer.flush()?;
    }

    let ml = match &config.eval.task {
        Some(task) => Some(ml_utility(&table, &synth, &schema, task, config.seed)?),
        None => None,
    };

    let report = EvalReport {
        version: 1,
        seed: config.seed,
        rows_origin: table.n_rows(),
        rows_synth: synth.n_rows(),
        repeated_rate_origin: repeated_row_rate(&table)?,
        repeated_rate_synth: repeated_row_rate(&synth)?,
        corr_diff,
        corr_warnings,
        sel_mse,
        sel_mse_repeats,
        ml,
        config: config.clone(),
    };
    std::fs::write(&paths.eval_report, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", paths.eval_report.display()))?;

    let mut writer = csv::Writer::from_path(&paths.eval_summary)
        .with_context(|| format!("creating {}", paths.eval_summary.display()))?;
    writer.write_record(["metric", "value"])?;
    writer.write_record(["repeated_rate_synth", &format!("{:?}", report.repeated_rate_synth)])?;
    if let Some(d) = report.corr_diff {
        writer.write_record(["corr_diff", &format!("{d:?}")])?;
    }
    writer.write_record(["sel_mse", &format!("{:?}", report.sel_mse)])?;
    writer.flush()?;
    Ok(())
}

pub fn ablate(config: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let table = load_inputs(config)?;
    let schema = read_schema(paths)?;
    let options = selsynth::eval::AblationOptions {
        estimator: config.estimator.to_config(),
        gan: config.gan.to_config(),
        thresholds_per_object: config.estimator.thresholds_per_object,
        num_queries: config.eval.num_queries,
        repeats: config.eval.repeats,
        task: config.eval.task.clone(),
        seeds: config.ablate.seeds.clone(),
    };
    let report = selsynth::eval::ablation_compare(&table, &schema, &options)?;
    for r in &report.per_seed {
        eprintln!(
            "ablate seed {}: sel_mse with {:.4} vs without {:.4}",
            r.seed, r.with_sel.sel_mse, r.without_sel.sel_mse
        );
    }
    eprintln!(
        "ablate: mean relative reduction {:.2}% ({} of {} seeds improved)",
        100.0 * report.mean_relative_reduction,
        report.wins,
        report.per_seed.len()
    );
    std::fs::write(&paths.ablation_report, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", paths.ablation_report.display()))?;
    Ok(())
}

/// Run the full pipeline with per-stage resumption recorded in the manifest.
pub fn pipeline(config: &PipelineConfig, paths: &RunPaths, force: bool) -> Result<()> {
    let config_toml = config.snapshot_toml()?;
    let mut manifest = if !force && paths.manifest.exists() {
        Manifest::load(&paths.manifest).unwrap_or_else(|_| Manifest::new(config.seed, config_toml.clone()))
    } else {
        Manifest::new(config.seed, config_toml.clone())
    };
    manifest.seed = config.seed;
    manifest.config_toml = config_toml;

    let dataset_hash =
        hash_file(&config.dataset).with_context(|| "stage fit-schema failed".to_string())?;
    let decl_hash =
        hash_file(&config.schema).with_context(|| "stage fit-schema failed".to_string())?;
    let seed_s = config.seed.to_string();

    let schema_input = combine_hashes(&[&dataset_hash, &decl_hash, &seed_s]);
    run_stage(&mut manifest, paths, "fit-schema", &schema_input, &paths.schema.clone(), force, || {
        fit_schema(config, paths)
    })?;

    let est_section = toml::to_string(&config.estimator)?;
    let schema_hash = hash_file(&paths.schema)?;
    let est_input = combine_hashes(&[&schema_hash, &dataset_hash, &est_section, &seed_s]);
    run_stage(&mut manifest, paths, "train-sel", &est_input, &paths.estimator.clone(), force, || {
        train_sel(config, paths)
    })?;

    let gan_section = toml::to_string(&config.gan)?;
    let est_hash = hash_file(&paths.estimator)?;
    let gan_input = combine_hashes(&[&schema_hash, &est_hash, &gan_section, &seed_s]);
    run_stage(&mut manifest, paths, "train-gan", &gan_input, &paths.gan.clone(), force, || {
        train_gan(config, paths)
    })?;

    let gan_hash = hash_file(&paths.gan)?;
    let gen_input = combine_hashes(&[&gan_hash, &seed_s]);
    run_stage(&mut manifest, paths, "generate", &gen_input, &paths.synthetic.clone(), force, || {
        generate_stage(config, paths, None)
    })?;

    let eval_section = toml::to_string(&config.eval)?;
    let synth_hash = hash_file(&paths.synthetic)?;
    let eval_input = combine_hashes(&[&synth_hash, &est_hash, &eval_section, &seed_s]);
    run_stage(&mut manifest, paths, "evaluate", &eval_input, &paths.eval_report.clone(), force, || {
        evaluate(config, paths)
    })?;

    manifest.save(&paths.manifest)?;
    eprintln!("pipeline: complete; manifest at {}", paths.manifest.display());
    Ok(())
}

fn run_stage(
    manifest: &mut Manifest,
    paths: &RunPaths,
    stage: &str,
    input_hash: &str,
    artifact: &Path,
    force: bool,
    run: impl FnOnce() -> Result<()>,
) -> Result<()> {
    if !force && manifest.stage_is_current(stage, input_hash, artifact) {
        eprintln!("pipeline: stage {stage} up to date, skipping");
        return Ok(());
    }
    let t0 = Instant::now();
    run().with_context(|| format!("stage {stage} failed"))?;
    let elapsed = t0.elapsed().as_secs_f64();
    manifest.record_stage(stage, input_hash.to_string(), artifact)?;
    manifest.runtime_seconds.insert(stage.to_string(), elapsed);
    // persist after every stage so an interrupted run resumes cleanly
    manifest.save(&paths.manifest)?;
    Ok(())
}

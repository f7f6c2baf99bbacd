//! Command-line front end for the toolkit.
//!
//! Subcommands mirror the pipeline stages so any step can run on its own:
//! `synth` generates cohorts, `km` reports curves for a grouping column,
//! `fit-cox`, `distill`, `stratify`, and `evaluate` run single stages, and
//! `pipeline` runs the whole chain and emits the report bundle.
//!
//! Exit code is 0 on success; failures print a stage-tagged diagnostic to
//! stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use survkit::cox::{fit_cox, predict_risk, prune_refit};
use survkit::dataset::{load_dataset, load_manifest, DatasetManifest, LoadedDataset};
use survkit::error::{Error, Result};
use survkit::metrics::{auc_at_horizon, bootstrap_ci, concordance_index};
use survkit::pipeline::{
    assemble_features, distill_teachers, effective_bootstrap, effective_stratify, run_pipeline,
    PipelineConfig,
};
use survkit::report::{
    cox_rows, write_cox_table_csv, write_expressions_csv, write_km_groups_csv, write_metrics_csv,
    MetricRow, TeacherDistillation,
};
use survkit::stratify::{apply_cutpoints, risk_cutpoints, select_group_count, tnm_stratification};
use survkit::survival::SurvivalOutcome;
use survkit::synth::{synth_survival, write_synth, SynthConfig};
use survkit::table::FeatureTable;

#[derive(Parser)]
#[command(name = "survkit", version, about = "Survival analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic survival cohort with a ground-truth sidecar.
    Synth(SynthArgs),
    /// Kaplan-Meier curves and pairwise log-rank tests for a grouping column.
    Km(KmArgs),
    /// Fit a Cox model on the training split and prune it.
    FitCox(CommonArgs),
    /// Distill teacher columns into symbolic expressions.
    Distill(CommonArgs),
    /// Fit, predict, and select the risk-group count on the training split.
    Stratify(CommonArgs),
    /// Bootstrap test-split metrics for a fitted risk score.
    Evaluate(CommonArgs),
    /// Run the full pipeline and emit the report bundle.
    Pipeline(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct KmArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Feature column whose distinct values define the groups.
    #[arg(long)]
    group_column: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Synth(args) => args.threads,
        Command::Km(args) => args.common.threads,
        Command::FitCox(args)
        | Command::Distill(args)
        | Command::Stratify(args)
        | Command::Evaluate(args)
        | Command::Pipeline(args) => args.threads,
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: setting up {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Km(args) => cmd_km(&args),
        Command::FitCox(args) => cmd_fit_cox(&args),
        Command::Distill(args) => cmd_distill(&args),
        Command::Stratify(args) => cmd_stratify(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Pipeline(args) => cmd_pipeline(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_path(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_manifest_data(args: &CommonArgs) -> Result<(DatasetManifest, LoadedDataset)> {
    let manifest =
        load_manifest(&args.manifest).map_err(|e| e.in_stage("load"))?;
    let data = load_dataset(&manifest).map_err(|e| e.in_stage("load"))?;
    Ok((manifest, data))
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn persist<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn take_outcomes(data: &LoadedDataset, rows: &[usize]) -> Vec<SurvivalOutcome> {
    rows.iter().map(|&i| data.outcomes[i]).collect()
}

/// Assembles the raw model table (features plus pass-through teachers) and
/// fits a pruned Cox model on the training split.
fn fit_on_train(
    data: &LoadedDataset,
    config: &PipelineConfig,
) -> Result<(FeatureTable, survkit::cox::CoxFit)> {
    let assembled = assemble_features(data, &[]).map_err(|e| e.in_stage("assemble"))?;
    let train_table = assembled.take_rows(&data.train_rows);
    let train_outcomes = take_outcomes(data, &data.train_rows);
    let full = fit_cox(&train_table, &train_outcomes, config.cox)
        .map_err(|e| e.in_stage("fit-cox"))?;
    let pruned = prune_refit(&full, &train_table, &train_outcomes, config.prune_alpha)
        .map_err(|e| e.in_stage("prune"))?;
    Ok((assembled, pruned))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut config: SynthConfig = toml::from_str(&std::fs::read_to_string(&args.config)?)?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    prepare_out(&args.out)?;
    let dataset = synth_survival(&config)?;
    let csv_path = args.out.join("cohort.csv");
    let sidecar_path = args.out.join("truth.json");
    write_synth(&dataset, &csv_path, &sidecar_path)?;
    let events = dataset.outcomes.iter().filter(|o| o.event).count();
    println!(
        "wrote {} subjects ({} events, {} censored) to {}",
        dataset.outcomes.len(),
        events,
        dataset.outcomes.len() - events,
        csv_path.display()
    );
    Ok(())
}

fn cmd_km(args: &KmArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let (manifest, data) = load_manifest_data(&args.common)?;
    let column = data
        .features
        .column(&args.group_column)
        .or_else(|| data.teachers.column(&args.group_column))
        .ok_or_else(|| Error::UnknownColumn(args.group_column.clone()))?
        .to_vec();
    // An ordinal column's declared codes fix the group order even when some
    // codes are absent from the data; otherwise groups are the sorted
    // distinct observed values.
    let declared = match manifest.ordinal_codes(&args.group_column) {
        Some(codes) => codes,
        None => {
            let mut codes = column.clone();
            codes.sort_by(f64::total_cmp);
            codes.dedup();
            codes
        }
    };
    let result = tnm_stratification(&column, &declared, &data.outcomes, &effective_stratify(&config))
        .map_err(|e| e.in_stage("stratify"))?;
    prepare_out(&args.common.out)?;
    write_km_groups_csv(&args.common.out.join("km_groups.csv"), &result.km_per_group)?;
    persist(&args.common.out, "stratification.json", &result)?;
    println!(
        "{} groups over {} subjects; km_groups.csv written to {}",
        result.n_groups,
        data.n_rows(),
        args.common.out.display()
    );
    Ok(())
}

fn cmd_fit_cox(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let (_, data) = load_manifest_data(args)?;
    let (_, fit) = fit_on_train(&data, &config)?;
    prepare_out(&args.out)?;
    persist(&args.out, "cox.json", &fit)?;
    write_cox_table_csv(&args.out.join("cox_table.csv"), &cox_rows(&fit))?;
    println!(
        "kept {} features after pruning at {}; cox_table.csv written to {}",
        fit.feature_names.len(),
        config.prune_alpha,
        args.out.display()
    );
    Ok(())
}

fn cmd_distill(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let (_, data) = load_manifest_data(args)?;
    if data.teachers.n_cols() == 0 {
        return Err(Error::InvalidInput(
            "manifest declares no teacher columns to distill".into(),
        ));
    }
    let distilled = distill_teachers(&data, &config).map_err(|e| e.in_stage("distill"))?;
    let reports: Vec<TeacherDistillation> = distilled.into_iter().map(|d| d.report).collect();
    prepare_out(&args.out)?;
    persist(&args.out, "distillation.json", &reports)?;
    write_expressions_csv(&args.out.join("expressions.csv"), &reports)?;
    for teacher in &reports {
        println!(
            "{}: depth {} seed {} test mse {:.6} -> {}",
            teacher.feature,
            teacher.chosen.depth,
            teacher.chosen.seed,
            teacher.chosen.test_mse,
            teacher.chosen.display
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct StratifySnapshot<'a> {
    n_groups: usize,
    cutpoints: &'a [f64],
    labels_train: &'a [usize],
    labels_test: &'a [usize],
    corrected_alpha: f64,
    all_distinct: bool,
    no_significant_stratification: bool,
    pairwise_p: &'a [Vec<f64>],
}

fn cmd_stratify(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let (_, data) = load_manifest_data(args)?;
    let (assembled, fit) = fit_on_train(&data, &config)?;
    let train_risks = predict_risk(&fit, &assembled.take_rows(&data.train_rows))
        .map_err(|e| e.in_stage("predict"))?;
    let test_risks = predict_risk(&fit, &assembled.take_rows(&data.test_rows))
        .map_err(|e| e.in_stage("predict"))?;
    let train_outcomes = take_outcomes(&data, &data.train_rows);
    let result = select_group_count(&train_risks, &train_outcomes, &effective_stratify(&config))
        .map_err(|e| e.in_stage("stratify"))?;
    let cutpoints = risk_cutpoints(&train_risks, &result.labels);
    let labels_test: Vec<usize> = test_risks
        .iter()
        .map(|&r| apply_cutpoints(&cutpoints, r))
        .collect();
    prepare_out(&args.out)?;
    write_km_groups_csv(&args.out.join("km_groups.csv"), &result.km_per_group)?;
    persist(
        &args.out,
        "stratification.json",
        &StratifySnapshot {
            n_groups: result.n_groups,
            cutpoints: &cutpoints,
            labels_train: &result.labels,
            labels_test: &labels_test,
            corrected_alpha: result.corrected_alpha,
            all_distinct: result.all_distinct,
            no_significant_stratification: result.no_significant_stratification,
            pairwise_p: &result.pairwise_p,
        },
    )?;
    println!(
        "{} risk groups (corrected alpha {}); outputs written to {}",
        result.n_groups,
        result.corrected_alpha,
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let (_, data) = load_manifest_data(args)?;
    if data.test_rows.is_empty() {
        return Err(Error::InvalidInput(
            "evaluate needs a non-empty test split".into(),
        ));
    }
    let (assembled, fit) = fit_on_train(&data, &config)?;
    let test_risks = predict_risk(&fit, &assembled.take_rows(&data.test_rows))
        .map_err(|e| e.in_stage("predict"))?;
    let test_outcomes = take_outcomes(&data, &data.test_rows);
    let bootstrap = effective_bootstrap(&config);
    let horizon = config.horizon_days;
    let cindex = bootstrap_ci(concordance_index, &test_risks, &test_outcomes, bootstrap)
        .map_err(|e| e.in_stage("evaluate"))?;
    let auc = bootstrap_ci(
        |r, o| auc_at_horizon(r, o, horizon),
        &test_risks,
        &test_outcomes,
        bootstrap,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    let table = vec![
        MetricRow::from_result("c_index", &cindex),
        MetricRow::from_result(&format!("auc_{horizon}d"), &auc),
    ];
    prepare_out(&args.out)?;
    write_metrics_csv(&args.out.join("metrics.csv"), &table)?;
    persist(&args.out, "metrics.json", &table)?;
    for row in &table {
        println!(
            "{}: {:.4} ({:.4}, {:.4})",
            row.metric, row.point, row.ci_lower, row.ci_upper
        );
    }
    Ok(())
}

fn cmd_pipeline(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let manifest =
        load_manifest(&args.manifest).map_err(|e| e.in_stage("load"))?;
    let bundle = run_pipeline(&manifest, &config, &args.out)?;
    println!(
        "pipeline complete: {} groups, {} metrics; report written to {}",
        bundle.stratification.n_groups,
        bundle.metric_table.len(),
        args.out.display()
    );
    Ok(())
}

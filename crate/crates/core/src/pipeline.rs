//! End-to-end pipeline orchestration.
//!
//! [`run_pipeline`] runs the full chain on a manifest-described dataset:
//! distill teacher columns into symbolic expressions, assemble the model
//! table, fit and prune a Cox model, predict risks, stratify, fit boundary
//! SVMs, evaluate, and emit the report bundle. Every learned quantity
//! (normalization, expressions, coefficients, cut points, hyperplanes)
//! comes from training rows only and is applied to test rows.
//!
//! Each stage persists its output under `<out>/stages/` so a failure keeps
//! everything computed so far and any stage can be rerun in isolation from
//! its predecessor's files. Errors are tagged with the failing stage.
//!
//! Determinism: for a fixed (manifest, config) pair the emitted bundle is
//! bit-identical across runs and across thread counts. Stage seeds are
//! mixed from `config.seed`, the stage tag, and the sub-config's own seed.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cox::{fit_cox, predict_risk, prune_refit, standardize, CoxOptions, NormParam};
use crate::dataset::{load_dataset, DatasetManifest, LoadedDataset};
use crate::error::{Error, Result};
use crate::gp::{
    distill_feature, format_expr, format_expr_precise, DistillResult, ExprTree, GpConfig,
};
use crate::metrics::{auc_at_horizon, bootstrap_ci, concordance_index, BootstrapOptions};
use crate::report::{
    cox_rows, emit_reports, DataSummary, ExpressionRow, MetricRow, Provenance, ReportBundle,
    ScatterRow, StratificationReport, TeacherDistillation,
};
use crate::stats::mix_seed;
use crate::stratify::{
    apply_cutpoints, assemble_decision_list, fit_boundary_svm, risk_cutpoints,
    select_group_count, BoundaryHyperplane, StratifyOptions, SvmOptions,
};
use crate::table::FeatureTable;

/// Settings for a full pipeline run. All stage seeds derive from `seed`
/// mixed with the stage tag and the sub-config's own seed field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// AUC horizon in days.
    pub horizon_days: f64,
    /// Distill teacher columns; when false they pass through unchanged.
    pub distill: bool,
    /// Template depths tried per teacher.
    pub distill_depths: Vec<u32>,
    pub gp: GpConfig,
    pub cox: CoxOptions,
    /// Wald significance level for pruning.
    pub prune_alpha: f64,
    pub stratify: StratifyOptions,
    pub svm: SvmOptions,
    /// Bootstrap settings for the test-set metrics.
    pub bootstrap: BootstrapOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon_days: 730.0,
            distill: true,
            distill_depths: vec![2, 3, 4],
            gp: GpConfig::default(),
            cox: CoxOptions::default(),
            prune_alpha: 0.05,
            stratify: StratifyOptions::default(),
            svm: SvmOptions::default(),
            bootstrap: BootstrapOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_alpha > 0.0 && self.prune_alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prune_alpha must lie in (0, 1), got {}",
                self.prune_alpha
            )));
        }
        if !(self.horizon_days > 0.0 && self.horizon_days.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "horizon_days must be positive, got {}",
                self.horizon_days
            )));
        }
        if self.distill_depths.is_empty() {
            return Err(Error::InvalidConfig("distill_depths is empty".into()));
        }
        self.gp.validate()?;
        Ok(())
    }

    /// Hex SHA-256 over the serialized config and manifest.
    pub fn hash_with(&self, manifest: &DatasetManifest) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(self)?.as_bytes());
        hasher.update(serde_json::to_string(manifest)?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    /// Reads a TOML config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }
}

/// Rows of a table restricted to a split.
fn split_table(table: &FeatureTable, rows: &[usize]) -> FeatureTable {
    table.take_rows(rows)
}

fn split_values(values: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| values[i]).collect()
}

fn persist<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn expression_row(feature: &str, run: &DistillResult) -> ExpressionRow {
    ExpressionRow {
        feature: feature.to_string(),
        depth: run.depth,
        seed: run.seed,
        expression: format_expr_precise(&run.expression),
        display: format_expr(&run.expression),
        train_mse: run.train_mse,
        test_mse: run.test_mse,
    }
}

/// Distillation outcome per teacher: the report rows plus the expression
/// used for column replacement.
pub struct DistilledTeacher {
    pub report: TeacherDistillation,
    pub expression: ExprTree,
}

/// Stratification options as the pipeline runs them: the shared horizon is
/// applied and the bootstrap seed is mixed from the pipeline seed.
pub fn effective_stratify(config: &PipelineConfig) -> StratifyOptions {
    let mut options = config.stratify.clone();
    options.horizon_days = config.horizon_days;
    options.bootstrap.seed = mix_seed(&[
        config.seed,
        0x7374_7261_7469_6679,
        config.stratify.bootstrap.seed,
    ]);
    options
}

/// SVM options with the boundary-stage seed mixed in.
pub fn effective_svm(config: &PipelineConfig) -> SvmOptions {
    let mut options = config.svm;
    options.seed = mix_seed(&[config.seed, 0x7376_6d00, config.svm.seed]);
    options
}

/// Bootstrap options for the evaluation stage, seed mixed in.
pub fn effective_bootstrap(config: &PipelineConfig) -> BootstrapOptions {
    let mut options = config.bootstrap;
    options.seed = mix_seed(&[config.seed, 0x6576_616c, config.bootstrap.seed]);
    options
}

fn effective_gp(config: &PipelineConfig, teacher_index: usize) -> GpConfig {
    let mut gp = config.gp.clone();
    gp.rng_seed = mix_seed(&[
        config.seed,
        0x6469_7374_696c_6c,
        teacher_index as u64,
        config.gp.rng_seed,
    ]);
    gp
}

#[derive(Serialize)]
struct StratificationSnapshot<'a> {
    n_groups: usize,
    corrected_alpha: f64,
    all_distinct: bool,
    no_significant_stratification: bool,
    cutpoints: &'a [f64],
    labels_train: &'a [usize],
    labels_test: &'a [usize],
    pairwise_p: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct DecisionListSnapshot<'a> {
    boundaries: &'a [BoundaryHyperplane],
    rendering: &'a Option<String>,
    agreement_train: &'a Option<f64>,
}

#[derive(Serialize)]
struct RiskRow<'a> {
    id: &'a str,
    split: &'static str,
    risk: f64,
}

/// Runs the full pipeline and emits the report bundle into `out_dir`.
pub fn run_pipeline(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<ReportBundle> {
    config.validate()?;
    let config_hash = config.hash_with(manifest)?;
    let stages_dir = out_dir.join("stages");
    std::fs::create_dir_all(&stages_dir)?;

    let data = load_pipeline_data(manifest).map_err(|e| e.in_stage("load"))?;
    let train_rows = &data.train_rows;
    let test_rows = &data.test_rows;

    // Stage 1: symbolic distillation of teacher columns.
    let distilled = distill_stage(&data, config, &stages_dir).map_err(|e| e.in_stage("distill"))?;

    // Stage 2: assemble the model table.
    let assembled =
        assemble_stage(&data, &distilled, &stages_dir).map_err(|e| e.in_stage("assemble"))?;
    let train_table = split_table(&assembled, train_rows);
    let test_table = split_table(&assembled, test_rows);
    let train_outcomes = split_outcomes(&data, train_rows);
    let test_outcomes = split_outcomes(&data, test_rows);

    // Stage 3: capture the train-side normalization.
    let norm_params: Vec<NormParam> = match config.cox.normalization {
        Some(mode) => standardize(&train_table, mode)
            .map(|(_, params)| params)
            .map_err(|e| e.in_stage("standardize"))?,
        None => Vec::new(),
    };
    persist(&stages_dir, "03_standardization.json", &norm_params)
        .map_err(|e| e.in_stage("standardize"))?;

    // Stage 4: Cox fit on the training split.
    let full_fit = fit_cox(&train_table, &train_outcomes, config.cox)
        .map_err(|e| e.in_stage("fit-cox"))?;
    persist(&stages_dir, "04_cox.json", &full_fit).map_err(|e| e.in_stage("fit-cox"))?;

    // Stage 5: prune non-significant features and refit.
    let fit = prune_refit(&full_fit, &train_table, &train_outcomes, config.prune_alpha)
        .map_err(|e| e.in_stage("prune"))?;
    persist(&stages_dir, "05_pruned_cox.json", &fit).map_err(|e| e.in_stage("prune"))?;

    // Stage 6: risk prediction on both splits.
    let train_risks = predict_risk(&fit, &train_table).map_err(|e| e.in_stage("predict"))?;
    let test_risks = predict_risk(&fit, &test_table).map_err(|e| e.in_stage("predict"))?;
    let risk_rows: Vec<RiskRow> = train_rows
        .iter()
        .zip(&train_risks)
        .map(|(&i, &risk)| RiskRow {
            id: &data.ids[i],
            split: "train",
            risk,
        })
        .chain(test_rows.iter().zip(&test_risks).map(|(&i, &risk)| RiskRow {
            id: &data.ids[i],
            split: "test",
            risk,
        }))
        .collect();
    persist(&stages_dir, "06_risks.json", &risk_rows).map_err(|e| e.in_stage("predict"))?;

    // Stage 7: group-count selection on train risks, cut points to test.
    let stratify_options = effective_stratify(config);
    let stratification = select_group_count(&train_risks, &train_outcomes, &stratify_options)
        .map_err(|e| e.in_stage("stratify"))?;
    let cutpoints = risk_cutpoints(&train_risks, &stratification.labels);
    let test_labels: Vec<usize> = test_risks
        .iter()
        .map(|&r| apply_cutpoints(&cutpoints, r))
        .collect();
    persist(
        &stages_dir,
        "07_stratification.json",
        &StratificationSnapshot {
            n_groups: stratification.n_groups,
            corrected_alpha: stratification.corrected_alpha,
            all_distinct: stratification.all_distinct,
            no_significant_stratification: stratification.no_significant_stratification,
            cutpoints: &cutpoints,
            labels_train: &stratification.labels,
            labels_test: &test_labels,
            pairwise_p: &stratification.pairwise_p,
        },
    )
    .map_err(|e| e.in_stage("stratify"))?;

    // Stage 8: boundary SVMs assembled into a decision list.
    let svm_options = effective_svm(config);
    let (boundaries, decision_list, agreement) = boundary_stage(
        &train_table,
        &stratification.labels,
        &test_table,
        &test_labels,
        stratification.n_groups,
        &svm_options,
        &assembled,
    )
    .map_err(|e| e.in_stage("boundaries"))?;
    persist(
        &stages_dir,
        "08_decision_list.json",
        &DecisionListSnapshot {
            boundaries: &boundaries,
            rendering: &decision_list,
            agreement_train: &agreement,
        },
    )
    .map_err(|e| e.in_stage("boundaries"))?;

    // Stage 9: test-set metrics with bootstrap intervals.
    let bootstrap = effective_bootstrap(config);
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
    let metric_table = vec![
        MetricRow::from_result("c_index", &cindex),
        MetricRow::from_result(&format!("auc_{horizon}d"), &auc),
    ];
    persist(&stages_dir, "09_metrics.json", &metric_table).map_err(|e| e.in_stage("evaluate"))?;

    // Stage 10: assemble and emit the bundle.
    let scatter = scatter_rows(
        &assembled,
        train_rows,
        &stratification.labels,
        test_rows,
        &test_labels,
    );
    let group_sizes = |labels: &[usize]| -> Vec<usize> {
        let mut sizes = vec![0usize; stratification.n_groups];
        for &l in labels {
            sizes[l - 1] += 1;
        }
        sizes
    };
    let bundle = ReportBundle {
        provenance: Provenance {
            config_hash,
            seed: config.seed,
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        data: DataSummary {
            rows_in: data.rows_in,
            rows_used: data.n_rows(),
            rows_dropped_missing: data.rows_dropped_missing,
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            feature_names: assembled.names().to_vec(),
            teacher_names: data.teachers.names().to_vec(),
        },
        distillation_table: distilled.into_iter().map(|d| d.report).collect(),
        cox_table: cox_rows(&fit),
        stratification: StratificationReport {
            n_groups: stratification.n_groups,
            corrected_alpha: stratification.corrected_alpha,
            all_distinct: stratification.all_distinct,
            no_significant_stratification: stratification.no_significant_stratification,
            cutpoints,
            group_sizes_train: group_sizes(&stratification.labels),
            group_sizes_test: group_sizes(&test_labels),
            pairwise_p: stratification.pairwise_p,
            km_groups: stratification.km_per_group,
            group_cindex_train: stratification.group_cindex,
            group_auc_train: stratification.group_auc,
            boundaries,
            decision_list,
            decision_agreement_train: agreement,
            scatter,
        },
        metric_table,
    };
    emit_reports(&bundle, out_dir).map_err(|e| e.in_stage("report"))?;
    Ok(bundle)
}

fn load_pipeline_data(manifest: &DatasetManifest) -> Result<LoadedDataset> {
    let data = load_dataset(manifest)?;
    if data.train_rows.is_empty() {
        return Err(Error::InvalidInput("pipeline needs training rows".into()));
    }
    if data.test_rows.is_empty() {
        return Err(Error::InvalidInput(
            "pipeline needs a non-empty test split for evaluation".into(),
        ));
    }
    Ok(data)
}

fn split_outcomes(data: &LoadedDataset, rows: &[usize]) -> Vec<crate::survival::SurvivalOutcome> {
    rows.iter().map(|&i| data.outcomes[i]).collect()
}

/// Distills every teacher column against the training split. Returns an
/// empty list when distillation is off or there are no teachers or no
/// feature columns to search over.
pub fn distill_teachers(
    data: &LoadedDataset,
    config: &PipelineConfig,
) -> Result<Vec<DistilledTeacher>> {
    let mut distilled = Vec::new();
    if config.distill && data.teachers.n_cols() > 0 && data.features.n_cols() > 0 {
        let train_features = split_table(&data.features, &data.train_rows);
        let test_features = split_table(&data.features, &data.test_rows);
        for (t_idx, name) in data.teachers.names().iter().enumerate() {
            let column = data.teachers.column_at(t_idx);
            let train_target = split_values(column, &data.train_rows);
            let test_target = split_values(column, &data.test_rows);
            let gp = effective_gp(config, t_idx);
            let table = distill_feature(
                &train_features,
                &train_target,
                &test_features,
                &test_target,
                &config.distill_depths,
                &gp,
            )?;
            let chosen = table
                .best_per_depth
                .iter()
                .min_by(|a, b| a.test_mse.total_cmp(&b.test_mse))
                .expect("at least one depth");
            distilled.push(DistilledTeacher {
                report: TeacherDistillation {
                    feature: name.clone(),
                    runs: table.runs.iter().map(|r| expression_row(name, r)).collect(),
                    chosen: expression_row(name, chosen),
                },
                expression: chosen.expression.clone(),
            });
        }
    }
    Ok(distilled)
}

fn distill_stage(
    data: &LoadedDataset,
    config: &PipelineConfig,
    stages_dir: &Path,
) -> Result<Vec<DistilledTeacher>> {
    let distilled = distill_teachers(data, config)?;
    let reports: Vec<&TeacherDistillation> = distilled.iter().map(|d| &d.report).collect();
    persist(stages_dir, "01_distillation.json", &reports)?;
    Ok(distilled)
}

/// Builds the model table: feature columns plus one column per teacher,
/// replaced by its chosen expression's outputs when distilled and passed
/// through raw otherwise.
pub fn assemble_features(
    data: &LoadedDataset,
    distilled: &[DistilledTeacher],
) -> Result<FeatureTable> {
    let mut assembled = data.features.clone();
    if distilled.is_empty() {
        for (t_idx, name) in data.teachers.names().iter().enumerate() {
            assembled.push_column(name.clone(), data.teachers.column_at(t_idx).to_vec())?;
        }
    } else {
        for (teacher, name) in distilled.iter().zip(data.teachers.names()) {
            let bound = teacher.expression.bind(&data.features)?;
            let column: Vec<f64> = (0..data.n_rows()).map(|i| bound.eval_row(i)).collect();
            assembled.push_column(name.clone(), column)?;
        }
    }
    Ok(assembled)
}

fn assemble_stage(
    data: &LoadedDataset,
    distilled: &[DistilledTeacher],
    stages_dir: &Path,
) -> Result<FeatureTable> {
    let assembled = assemble_features(data, distilled)?;

    // Persist the assembled table with outcome and split context.
    let path = stages_dir.join("02_features.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    let mut header = vec![
        "id".to_string(),
        "split".to_string(),
        "time".to_string(),
        "event".to_string(),
    ];
    header.extend(assembled.names().iter().cloned());
    writer.write_record(&header)?;
    let is_train: Vec<bool> = {
        let mut marks = vec![false; data.n_rows()];
        for &i in &data.train_rows {
            marks[i] = true;
        }
        marks
    };
    for i in 0..data.n_rows() {
        let mut record = vec![
            data.ids[i].clone(),
            if is_train[i] { "train" } else { "test" }.to_string(),
            format!("{}", data.outcomes[i].time),
            format!("{}", u8::from(data.outcomes[i].event)),
        ];
        record.extend(assembled.row(i).iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(assembled)
}

#[allow(clippy::too_many_arguments)]
fn boundary_stage(
    train_table: &FeatureTable,
    train_labels: &[usize],
    test_table: &FeatureTable,
    test_labels: &[usize],
    n_groups: usize,
    svm_options: &SvmOptions,
    assembled: &FeatureTable,
) -> Result<(Vec<BoundaryHyperplane>, Option<String>, Option<f64>)> {
    if n_groups < 2 {
        return Ok((Vec::new(), None, None));
    }
    let boundaries: Vec<BoundaryHyperplane> = (1..n_groups)
        .into_par_iter()
        .map(|k| {
            fit_boundary_svm(
                train_table,
                train_labels,
                k,
                Some((test_table, test_labels)),
                svm_options,
            )
        })
        .collect::<Result<_>>()?;
    let list = assemble_decision_list(boundaries.clone())?;
    let matches = AtomicUsize::new(0);
    let assignments: Vec<usize> = (0..train_table.n_rows())
        .into_par_iter()
        .map(|i| list.assign_group(&train_table.row(i)))
        .collect::<Result<_>>()?;
    for (assigned, &label) in assignments.iter().zip(train_labels) {
        if *assigned == label {
            matches.fetch_add(1, Ordering::Relaxed);
        }
    }
    let agreement = matches.load(Ordering::Relaxed) as f64 / train_labels.len() as f64;
    let rendering = list.render(assembled.names());
    Ok((boundaries, Some(rendering), Some(agreement)))
}

fn scatter_rows(
    assembled: &FeatureTable,
    train_rows: &[usize],
    train_labels: &[usize],
    test_rows: &[usize],
    test_labels: &[usize],
) -> Vec<ScatterRow> {
    let mut rows = Vec::with_capacity(train_rows.len() + test_rows.len());
    for (&i, &group) in train_rows.iter().zip(train_labels) {
        rows.push(ScatterRow {
            split: "train".to_string(),
            group,
            features: assembled.row(i),
        });
    }
    for (&i, &group) in test_rows.iter().zip(test_labels) {
        rows.push(ScatterRow {
            split: "test".to_string(),
            group,
            features: assembled.row(i),
        });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, FeatureColumn};
    use crate::synth::{synth_survival, write_synth, SynthConfig};
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    fn numeric_column(name: &str) -> FeatureColumn {
        FeatureColumn {
            name: name.into(),
            kind: ColumnKind::Numeric,
            normalize: false,
            encoding: BTreeMap::new(),
        }
    }

    /// Writes a synthetic cohort and returns a manifest over it.
    fn synth_manifest(
        dir: &Path,
        config: &SynthConfig,
        features: Vec<FeatureColumn>,
        teachers: Vec<String>,
    ) -> DatasetManifest {
        let dataset = synth_survival(config).unwrap();
        let csv: PathBuf = dir.join("cohort.csv");
        write_synth(&dataset, &csv, &dir.join("truth.json")).unwrap();
        DatasetManifest {
            csv_path: csv.to_str().unwrap().to_string(),
            id_column: "id".into(),
            time_column: "time".into(),
            event_column: "event".into(),
            feature_columns: features,
            teacher_columns: teachers,
            split_column: None,
            split_fraction: Some(0.7),
            split_seed: 0,
        }
    }

    fn fast_config() -> PipelineConfig {
        let mut config = PipelineConfig::default();
        config.bootstrap.n_resamples = 100;
        config.stratify.bootstrap.n_resamples = 50;
        config.svm.iterations = 20_000;
        config
    }

    #[test]
    fn end_to_end_on_a_synthetic_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_subjects: 400,
            beta_true: vec![1.5, -1.5],
            ..SynthConfig::default()
        };
        let manifest = synth_manifest(
            dir.path(),
            &synth,
            vec![numeric_column("x1"), numeric_column("x2")],
            Vec::new(),
        );
        let out = dir.path().join("out");
        let bundle = run_pipeline(&manifest, &fast_config(), &out).unwrap();

        assert_eq!(bundle.data.rows_used, 400);
        assert_eq!(bundle.data.n_train, 280);
        assert_eq!(bundle.data.n_test, 120);
        assert!(!bundle.cox_table.is_empty());
        assert!(bundle.stratification.n_groups >= 2);
        let c = &bundle.metric_table[0];
        assert_eq!(c.metric, "c_index");
        assert!(c.point > 0.6, "c-index {}", c.point);
        assert!(c.ci_lower <= c.point && c.point <= c.ci_upper);
        assert_eq!(
            bundle.stratification.scatter.len(),
            bundle.data.n_train + bundle.data.n_test
        );
        assert_eq!(
            bundle.stratification.cutpoints.len(),
            bundle.stratification.n_groups - 1
        );

        for file in [
            "report.json",
            "cox_table.csv",
            "km_groups.csv",
            "expressions.csv",
            "boundaries.csv",
            "metrics.csv",
            "scatter.csv",
        ] {
            assert!(out.join(file).exists(), "missing {file}");
        }
        for stage in [
            "01_distillation.json",
            "02_features.csv",
            "03_standardization.json",
            "04_cox.json",
            "05_pruned_cox.json",
            "06_risks.json",
            "07_stratification.json",
            "08_decision_list.json",
            "09_metrics.json",
        ] {
            assert!(out.join("stages").join(stage).exists(), "missing {stage}");
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_subjects: 250,
            beta_true: vec![2.0, -2.0],
            ..SynthConfig::default()
        };
        let manifest = synth_manifest(
            dir.path(),
            &synth,
            vec![numeric_column("x1"), numeric_column("x2")],
            Vec::new(),
        );
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        run_pipeline(&manifest, &fast_config(), &out_a).unwrap();
        run_pipeline(&manifest, &fast_config(), &out_b).unwrap();
        for file in [
            "report.json",
            "cox_table.csv",
            "km_groups.csv",
            "metrics.csv",
            "boundaries.csv",
            "scatter.csv",
        ] {
            assert_eq!(
                std::fs::read(out_a.join(file)).unwrap(),
                std::fs::read(out_b.join(file)).unwrap(),
                "{file} differs"
            );
        }
    }

    #[test]
    fn pure_noise_aborts_at_the_prune_stage() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_subjects: 200,
            beta_true: vec![0.0, 0.0],
            rng_seed: 5,
            ..SynthConfig::default()
        };
        let manifest = synth_manifest(
            dir.path(),
            &synth,
            vec![numeric_column("x1"), numeric_column("x2")],
            Vec::new(),
        );
        let out = dir.path().join("out");
        match run_pipeline(&manifest, &fast_config(), &out) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "prune");
                assert!(matches!(*source, Error::NoSignificantFeatures(_)));
            }
            other => panic!("expected a prune-stage failure, got {other:?}"),
        }
        // Earlier stages stay persisted.
        assert!(out.join("stages").join("04_cox.json").exists());
        assert!(!out.join("report.json").exists());
    }

    #[test]
    fn teacher_columns_are_distilled_and_replace_the_raw_column() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_subjects: 240,
            beta_true: vec![1.5, -1.5],
            rng_seed: 2,
            ..SynthConfig::default()
        };
        let dataset = synth_survival(&synth).unwrap();
        // The teacher is the product of the two covariates, which a depth-2
        // template represents exactly and which is not an affine image of
        // either raw column.
        let csv = dir.path().join("cohort.csv");
        let mut writer = csv::Writer::from_path(&csv).unwrap();
        writer
            .write_record(["id", "time", "event", "x1", "x2", "teacher"])
            .unwrap();
        for i in 0..240 {
            let row = dataset.table.row(i);
            writer
                .write_record([
                    format!("{}", i + 1),
                    format!("{}", dataset.outcomes[i].time),
                    format!("{}", u8::from(dataset.outcomes[i].event)),
                    format!("{}", row[0]),
                    format!("{}", row[1]),
                    format!("{}", row[0] * row[1]),
                ])
                .unwrap();
        }
        writer.flush().unwrap();
        drop(writer);

        let manifest = DatasetManifest {
            csv_path: csv.to_str().unwrap().to_string(),
            id_column: "id".into(),
            time_column: "time".into(),
            event_column: "event".into(),
            feature_columns: vec![numeric_column("x1"), numeric_column("x2")],
            teacher_columns: vec!["teacher".into()],
            split_column: None,
            split_fraction: Some(0.7),
            split_seed: 0,
        };
        let mut config = fast_config();
        config.distill_depths = vec![2];
        config.gp.generations = 24;
        config.gp.base_population = 32;
        config.gp.seeds = 2;
        config.gp.stop_fitness = Some(1e-12);

        let out = dir.path().join("out");
        let bundle = run_pipeline(&manifest, &config, &out).unwrap();
        assert_eq!(bundle.distillation_table.len(), 1);
        assert_eq!(bundle.distillation_table[0].runs.len(), 2);
        let chosen = &bundle.distillation_table[0].chosen;
        assert!(chosen.test_mse.is_finite());
        assert!(bundle.data.feature_names.contains(&"teacher".to_string()));
        // The distillation table rows appear in the CSV export.
        let expressions = std::fs::read_to_string(out.join("expressions.csv")).unwrap();
        assert!(expressions.lines().count() >= 3);
    }

    #[test]
    fn config_hash_tracks_config_and_manifest_changes() {
        let manifest = DatasetManifest {
            csv_path: "a.csv".into(),
            id_column: "id".into(),
            time_column: "time".into(),
            event_column: "event".into(),
            feature_columns: vec![numeric_column("x")],
            teacher_columns: Vec::new(),
            split_column: None,
            split_fraction: Some(0.5),
            split_seed: 0,
        };
        let config = PipelineConfig::default();
        let base = config.hash_with(&manifest).unwrap();
        assert_eq!(base, config.hash_with(&manifest).unwrap());
        let reseeded = PipelineConfig {
            seed: 1,
            ..config.clone()
        };
        assert_ne!(base, reseeded.hash_with(&manifest).unwrap());
        let moved = DatasetManifest {
            csv_path: "b.csv".into(),
            ..manifest.clone()
        };
        assert_ne!(base, config.hash_with(&moved).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected_before_running() {
        let mut config = PipelineConfig::default();
        config.prune_alpha = 1.5;
        assert!(config.validate().is_err());
        let mut config = PipelineConfig::default();
        config.distill_depths.clear();
        assert!(config.validate().is_err());
        let mut config = PipelineConfig::default();
        config.horizon_days = -1.0;
        assert!(config.validate().is_err());
    }
}

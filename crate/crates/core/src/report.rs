//! Report bundle types and file emission.
//!
//! The bundle is the single structured result of a pipeline run: Cox table,
//! distillation table, stratification report, metric table, and provenance.
//! [`emit_reports`] writes it as one hierarchical JSON file plus flat CSVs
//! for external plotting. Floats are written with the shortest
//! round-tripping representation, so reading a CSV back reproduces the
//! bundle values exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cox::CoxFit;
use crate::error::Result;
use crate::metrics::MetricResult;
use crate::stratify::BoundaryHyperplane;
use crate::survival::KmCurve;

/// Identifies the exact run that produced a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex SHA-256 over the serialized pipeline config and manifest.
    pub config_hash: String,
    pub seed: u64,
    pub package: String,
    pub version: String,
}

/// Row accounting and column inventory of the loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub rows_in: usize,
    pub rows_used: usize,
    pub rows_dropped_missing: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Columns of the assembled model table, in order.
    pub feature_names: Vec<String>,
    pub teacher_names: Vec<String>,
}

/// One fitted Cox feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxRow {
    pub name: String,
    pub coefficient: f64,
    pub std_err: f64,
    pub hazard_ratio: f64,
    pub hr_ci_lower: f64,
    pub hr_ci_upper: f64,
    pub p_value: f64,
    /// "protective" below hazard ratio 1, "harmful" above, "neutral" at 1.
    pub effect: String,
}

/// Flattens a fit into report rows.
pub fn cox_rows(fit: &CoxFit) -> Vec<CoxRow> {
    let directions = fit.effect_directions();
    (0..fit.feature_names.len())
        .map(|j| CoxRow {
            name: fit.feature_names[j].clone(),
            coefficient: fit.beta[j],
            std_err: fit.std_err[j],
            hazard_ratio: fit.hazard_ratio[j],
            hr_ci_lower: fit.hr_ci_lower[j],
            hr_ci_upper: fit.hr_ci_upper[j],
            p_value: fit.p_value[j],
            effect: directions[j].as_str().to_string(),
        })
        .collect()
}

/// One distillation run rendered for the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionRow {
    pub feature: String,
    pub depth: u32,
    pub seed: u64,
    /// Full-precision rendering; parses back to the identical expression.
    pub expression: String,
    /// Three-significant-digit rendering for display.
    pub display: String,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// All runs for one teacher feature plus the selected expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherDistillation {
    pub feature: String,
    pub runs: Vec<ExpressionRow>,
    /// The run with the lowest test MSE across depths.
    pub chosen: ExpressionRow,
}

/// One subject in the feature-scatter export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    /// "train" or "test".
    pub split: String,
    pub group: usize,
    /// Assembled feature values, same order as the data summary names.
    pub features: Vec<f64>,
}

/// Stratification evidence: groups, tests, curves, and boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratificationReport {
    pub n_groups: usize,
    pub corrected_alpha: f64,
    pub all_distinct: bool,
    pub no_significant_stratification: bool,
    /// Risk cut points transferring the train grouping to new scores.
    pub cutpoints: Vec<f64>,
    pub group_sizes_train: Vec<usize>,
    pub group_sizes_test: Vec<usize>,
    pub pairwise_p: Vec<Vec<f64>>,
    /// Per-group Kaplan-Meier curves on the training split, group order.
    pub km_groups: Vec<KmCurve>,
    pub group_cindex_train: Option<MetricResult>,
    pub group_auc_train: Option<MetricResult>,
    pub boundaries: Vec<BoundaryHyperplane>,
    /// Rendered decision-list pseudocode, absent for a single group.
    pub decision_list: Option<String>,
    /// Fraction of training subjects whose decision-list group matches
    /// their quantile label.
    pub decision_agreement_train: Option<f64>,
    pub scatter: Vec<ScatterRow>,
}

/// One evaluated metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl MetricRow {
    pub fn from_result(name: &str, result: &MetricResult) -> Self {
        Self {
            metric: name.to_string(),
            point: result.point,
            ci_lower: result.ci_lower,
            ci_upper: result.ci_upper,
        }
    }
}

/// The full structured result of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub data: DataSummary,
    pub distillation_table: Vec<TeacherDistillation>,
    pub cox_table: Vec<CoxRow>,
    pub stratification: StratificationReport,
    pub metric_table: Vec<MetricRow>,
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn s<T: std::fmt::Display>(v: T) -> String {
    format!("{v}")
}

/// Writes the Cox coefficient table as a flat CSV.
pub fn write_cox_table_csv(path: &Path, table: &[CoxRow]) -> Result<()> {
    let header: Vec<String> = [
        "name",
        "hazard_ratio",
        "ci_lo",
        "ci_hi",
        "p_value",
        "effect",
        "coefficient",
        "std_err",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                s(r.hazard_ratio),
                s(r.hr_ci_lower),
                s(r.hr_ci_upper),
                s(r.p_value),
                r.effect.clone(),
                s(r.coefficient),
                s(r.std_err),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes per-group Kaplan-Meier curves in long form, groups numbered 1..n.
pub fn write_km_groups_csv(path: &Path, curves: &[KmCurve]) -> Result<()> {
    let header: Vec<String> = ["group", "time", "survival", "ci_lo", "ci_hi"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for (g, curve) in curves.iter().enumerate() {
        for i in 0..curve.times.len() {
            rows.push(vec![
                s(g + 1),
                s(curve.times[i]),
                s(curve.survival[i]),
                s(curve.ci_lower[i]),
                s(curve.ci_upper[i]),
            ]);
        }
    }
    write_csv(path, &header, &rows)
}

/// Writes every distillation run, flagging each teacher's chosen row.
pub fn write_expressions_csv(path: &Path, table: &[TeacherDistillation]) -> Result<()> {
    let header: Vec<String> = [
        "feature",
        "depth",
        "seed",
        "expression",
        "train_mse",
        "test_mse",
        "chosen",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for teacher in table {
        for run in &teacher.runs {
            let chosen = run.depth == teacher.chosen.depth && run.seed == teacher.chosen.seed;
            rows.push(vec![
                run.feature.clone(),
                s(run.depth),
                s(run.seed),
                run.expression.clone(),
                s(run.train_mse),
                s(run.test_mse),
                s(u8::from(chosen)),
            ]);
        }
    }
    write_csv(path, &header, &rows)
}

/// Writes decision-list hyperplanes, one row per boundary. A missing
/// held-out AUROC becomes an empty cell.
pub fn write_boundaries_csv(
    path: &Path,
    feature_names: &[String],
    boundaries: &[BoundaryHyperplane],
) -> Result<()> {
    let mut header = vec!["k".to_string()];
    header.extend(feature_names.iter().map(|n| format!("w_{n}")));
    header.push("intercept".to_string());
    header.push("auroc".to_string());
    let rows: Vec<Vec<String>> = boundaries
        .iter()
        .map(|b| {
            let mut row = vec![s(b.boundary_index)];
            row.extend(b.weights.iter().map(|w| s(w)));
            row.push(s(b.intercept));
            row.push(b.test_auroc.map(s).unwrap_or_default());
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes the metric table (point estimate and interval per metric).
pub fn write_metrics_csv(path: &Path, table: &[MetricRow]) -> Result<()> {
    let header: Vec<String> = ["metric", "point", "lo", "hi"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|m| vec![m.metric.clone(), s(m.point), s(m.ci_lower), s(m.ci_upper)])
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes per-subject plot rows: split, assigned group, feature values.
pub fn write_scatter_csv(
    path: &Path,
    feature_names: &[String],
    scatter: &[ScatterRow],
) -> Result<()> {
    let mut header = vec!["split".to_string(), "group".to_string()];
    header.extend(feature_names.iter().cloned());
    let rows: Vec<Vec<String>> = scatter
        .iter()
        .map(|r| {
            let mut row = vec![r.split.clone(), s(r.group)];
            row.extend(r.features.iter().map(|v| s(v)));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes `report.json` plus the flat CSV exports into `out_dir`.
///
/// Files: cox_table.csv, km_groups.csv, expressions.csv, boundaries.csv,
/// metrics.csv, scatter.csv.
pub fn emit_reports(bundle: &ReportBundle, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(bundle)?,
    )?;
    write_cox_table_csv(&out_dir.join("cox_table.csv"), &bundle.cox_table)?;
    write_km_groups_csv(
        &out_dir.join("km_groups.csv"),
        &bundle.stratification.km_groups,
    )?;
    write_expressions_csv(&out_dir.join("expressions.csv"), &bundle.distillation_table)?;
    write_boundaries_csv(
        &out_dir.join("boundaries.csv"),
        &bundle.data.feature_names,
        &bundle.stratification.boundaries,
    )?;
    write_metrics_csv(&out_dir.join("metrics.csv"), &bundle.metric_table)?;
    write_scatter_csv(
        &out_dir.join("scatter.csv"),
        &bundle.data.feature_names,
        &bundle.stratification.scatter,
    )?;
    Ok(())
}

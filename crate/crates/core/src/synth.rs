//! Synthetic survival-data generation.
//!
//! Event times follow a Weibull proportional-hazards model: with baseline
//! survival S0(t) = exp(-(t / scale)^shape) and linear predictor
//! eta = beta . x, the subject-level survival is S0(t)^exp(eta) and times
//! are drawn by inverse transform. Independent exponential censoring is
//! calibrated by bisection on its scale so the realized censoring rate hits
//! the target within 0.05. In strata mode subjects are split evenly into
//! groups whose hazards form a geometric ladder, and the stratum index is
//! also emitted as a feature column. Everything is deterministic per seed:
//! covariates, event draws, and censoring draws use fixed independent RNG
//! streams, and calibration reuses the same draws at every trial scale.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::ExprTree;
use crate::stats::stream_rng;
use crate::survival::SurvivalOutcome;
use crate::table::FeatureTable;

/// Acceptable gap between the requested and realized censoring rate.
const CENSORING_TOLERANCE: f64 = 0.05;

/// Distribution of one synthetic covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateKind {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

/// A named covariate to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Weibull baseline shape (> 0).
    pub baseline_shape: f64,
    /// Weibull baseline scale in days (> 0).
    pub baseline_scale: f64,
    /// True log-hazard coefficient per covariate, in declaration order.
    pub beta_true: Vec<f64>,
    pub covariates: Vec<CovariateSpec>,
    /// Fraction of subjects to censor, in [0, 0.9]; 0 disables censoring.
    pub censoring_target: f64,
    /// When set, subjects are split evenly into this many hazard strata.
    pub strata: Option<usize>,
    /// Hazard ratio between adjacent strata.
    pub strata_hazard_ratio: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 500,
            baseline_shape: 1.5,
            baseline_scale: 1000.0,
            beta_true: vec![0.5, -0.5],
            covariates: vec![
                CovariateSpec {
                    name: "x1".to_string(),
                    kind: CovariateKind::Uniform {
                        low: 0.0,
                        high: 1.0,
                    },
                },
                CovariateSpec {
                    name: "x2".to_string(),
                    kind: CovariateKind::Uniform {
                        low: 0.0,
                        high: 1.0,
                    },
                },
            ],
            censoring_target: 0.3,
            strata: None,
            strata_hazard_ratio: 2.0,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidConfig("n_subjects must be positive".into()));
        }
        if !(self.baseline_shape > 0.0 && self.baseline_shape.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "baseline_shape must be positive, got {}",
                self.baseline_shape
            )));
        }
        if !(self.baseline_scale > 0.0 && self.baseline_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "baseline_scale must be positive, got {}",
                self.baseline_scale
            )));
        }
        if !(0.0..=0.9).contains(&self.censoring_target) {
            return Err(Error::InvalidConfig(format!(
                "censoring_target must lie in [0, 0.9], got {}",
                self.censoring_target
            )));
        }
        if self.beta_true.len() != self.covariates.len() {
            return Err(Error::InvalidConfig(format!(
                "beta_true has {} entries for {} covariates",
                self.beta_true.len(),
                self.covariates.len()
            )));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("beta_true must be finite".into()));
        }
        if let Some(s) = self.strata {
            if s < 2 {
                return Err(Error::InvalidConfig(format!(
                    "strata must be at least 2, got {s}"
                )));
            }
            if s > self.n_subjects {
                return Err(Error::InvalidConfig(format!(
                    "cannot split {} subjects into {s} strata",
                    self.n_subjects
                )));
            }
            if !(self.strata_hazard_ratio > 0.0 && self.strata_hazard_ratio.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "strata_hazard_ratio must be positive, got {}",
                    self.strata_hazard_ratio
                )));
            }
        }
        for spec in &self.covariates {
            if spec.name.is_empty() {
                return Err(Error::InvalidConfig("covariate name is empty".into()));
            }
            match spec.kind {
                CovariateKind::Uniform { low, high } => {
                    if !(low < high) || !low.is_finite() || !high.is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "uniform covariate '{}' needs low < high",
                            spec.name
                        )));
                    }
                }
                CovariateKind::Normal { mean, sd } => {
                    if !mean.is_finite() || !(sd >= 0.0 && sd.is_finite()) {
                        return Err(Error::InvalidConfig(format!(
                            "normal covariate '{}' needs finite mean and sd >= 0",
                            spec.name
                        )));
                    }
                }
                CovariateKind::Bernoulli { p } => {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidConfig(format!(
                            "bernoulli covariate '{}' needs p in [0, 1]",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ground truth saved alongside a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub beta_true: Vec<f64>,
    /// Linear predictor per subject, including the stratum offset.
    pub risk_scores: Vec<f64>,
    /// 1-based stratum per subject, present in strata mode.
    pub strata: Option<Vec<usize>>,
    pub censoring_target: f64,
    pub censoring_realized: f64,
    pub rng_seed: u64,
}

/// A generated cohort: covariate table, outcomes, and the ground truth.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// 1-based subject ids.
    pub ids: Vec<u64>,
    /// Covariate columns, plus a trailing "stratum" column in strata mode.
    pub table: FeatureTable,
    pub outcomes: Vec<SurvivalOutcome>,
    pub truth: SynthTruth,
}

fn draw_covariate(kind: CovariateKind, rng: &mut impl Rng) -> f64 {
    match kind {
        CovariateKind::Uniform { low, high } => rng.gen_range(low..high),
        CovariateKind::Normal { mean, sd } => {
            if sd == 0.0 {
                mean
            } else {
                Normal::new(mean, sd).expect("validated").sample(rng)
            }
        }
        CovariateKind::Bernoulli { p } => {
            if rng.gen_range(0.0..1.0) < p {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Even stratum sizes: earlier strata absorb the remainder.
fn stratum_of(subject: usize, n: usize, strata: usize) -> usize {
    let base = n / strata;
    let extra = n % strata;
    let boundary = extra * (base + 1);
    if subject < boundary {
        subject / (base + 1) + 1
    } else {
        (subject - boundary) / base + extra + 1
    }
}

/// Calibrates the exponential censoring scale against fixed draws so the
/// realized censoring fraction lands within the tolerance of the target.
fn calibrate_censoring(
    event_times: &[f64],
    unit_draws: &[f64],
    target: f64,
) -> Result<(f64, f64)> {
    let n = event_times.len() as f64;
    let realized = |scale: f64| -> f64 {
        event_times
            .iter()
            .zip(unit_draws)
            .filter(|(t, e)| scale * **e < **t)
            .count() as f64
            / n
    };

    // The realized rate is non-increasing in the scale: bracket the target.
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while realized(hi) > target && hi < 1e18 {
        hi *= 4.0;
    }
    let mut best_scale = hi;
    let mut best_rate = realized(hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rate = realized(mid);
        if (rate - target).abs() < (best_rate - target).abs() {
            best_scale = mid;
            best_rate = rate;
        }
        if rate > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best_rate - target).abs() > CENSORING_TOLERANCE {
        return Err(Error::CensoringInfeasible {
            target,
            achieved: best_rate,
        });
    }
    Ok((best_scale, best_rate))
}

/// Draws a cohort from the configured Weibull proportional-hazards model.
pub fn synth_survival(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let n = config.n_subjects;
    let d = config.covariates.len();

    let mut cov_rng = stream_rng(config.rng_seed, 1);
    let mut columns = vec![Vec::with_capacity(n); d];
    for _ in 0..n {
        for (j, spec) in config.covariates.iter().enumerate() {
            columns[j].push(draw_covariate(spec.kind, &mut cov_rng));
        }
    }

    let strata_labels: Option<Vec<usize>> = config
        .strata
        .map(|s| (0..n).map(|i| stratum_of(i, n, s)).collect());
    let log_ratio = config.strata_hazard_ratio.ln();
    let risk_scores: Vec<f64> = (0..n)
        .map(|i| {
            let mut eta: f64 = (0..d).map(|j| config.beta_true[j] * columns[j][i]).sum();
            if let Some(labels) = &strata_labels {
                eta += log_ratio * (labels[i] - 1) as f64;
            }
            eta
        })
        .collect();

    // Inverse-transform Weibull event times: T = scale * (-ln U / e^eta)^(1/shape).
    let mut event_rng = stream_rng(config.rng_seed, 2);
    let event_times: Vec<f64> = risk_scores
        .iter()
        .map(|eta| {
            let u: f64 = event_rng.gen_range(f64::EPSILON..1.0);
            config.baseline_scale
                * (-u.ln() / eta.exp()).powf(1.0 / config.baseline_shape)
        })
        .collect();

    let mut cens_rng = stream_rng(config.rng_seed, 3);
    let unit_draws: Vec<f64> = (0..n)
        .map(|_| -cens_rng.gen_range(f64::EPSILON..1.0_f64).ln())
        .collect();

    let (outcomes, censoring_realized) = if config.censoring_target == 0.0 {
        (
            event_times
                .iter()
                .map(|&t| SurvivalOutcome::new(t, true))
                .collect(),
            0.0,
        )
    } else {
        let (scale, realized) =
            calibrate_censoring(&event_times, &unit_draws, config.censoring_target)?;
        let outcomes = event_times
            .iter()
            .zip(&unit_draws)
            .map(|(&t, &e)| {
                let c = scale * e;
                if c < t {
                    SurvivalOutcome::new(c, false)
                } else {
                    SurvivalOutcome::new(t, true)
                }
            })
            .collect();
        (outcomes, realized)
    };

    let mut table = FeatureTable::with_rows(n);
    for (spec, column) in config.covariates.iter().zip(columns) {
        table.push_column(spec.name.clone(), column)?;
    }
    if let Some(labels) = &strata_labels {
        table.push_column("stratum", labels.iter().map(|&s| s as f64).collect())?;
    }

    Ok(SynthDataset {
        ids: (1..=n as u64).collect(),
        table,
        outcomes,
        truth: SynthTruth {
            beta_true: config.beta_true.clone(),
            risk_scores,
            strata: strata_labels,
            censoring_target: config.censoring_target,
            censoring_realized,
            rng_seed: config.rng_seed,
        },
    })
}

/// Writes the cohort as a CSV (id, time, event, covariates) and the ground
/// truth as a JSON sidecar.
pub fn write_synth(dataset: &SynthDataset, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["id".to_string(), "time".to_string(), "event".to_string()];
    header.extend(dataset.table.names().iter().cloned());
    writer.write_record(&header)?;
    for i in 0..dataset.outcomes.len() {
        let mut record = vec![
            format!("{}", dataset.ids[i]),
            format!("{}", dataset.outcomes[i].time),
            format!("{}", u8::from(dataset.outcomes[i].event)),
        ];
        record.extend(dataset.table.row(i).iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&dataset.truth)?)?;
    Ok(())
}

/// Evaluates a planted expression on every row, optionally adding Gaussian
/// noise. With `noise_sd == 0` the column is the exact evaluation.
pub fn synth_teacher(
    expression: &ExprTree,
    data: &FeatureTable,
    noise_sd: f64,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise_sd must be a finite non-negative number, got {noise_sd}"
        )));
    }
    let bound = expression.bind(data)?;
    let mut column: Vec<f64> = (0..data.n_rows()).map(|i| bound.eval_row(i)).collect();
    if noise_sd > 0.0 {
        let mut rng = stream_rng(rng_seed, 4);
        let noise = Normal::new(0.0, noise_sd).expect("validated");
        for v in column.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(column)
}

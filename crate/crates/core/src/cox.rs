//! Cox proportional hazards regression.
//!
//! The partial likelihood uses the Efron correction for tied event times,
//! which degenerates to the Breslow form when no ties are present. Fitting is
//! Newton-Raphson with step-halving; standard errors come from the inverse of
//! the observed information at the optimum. Features are standardized
//! internally (z-score by default, min-max on request) and the normalization
//! parameters are stored on the fit so new data can be scored consistently.
//!
//! Two standalone losses support external model training on top of the same
//! data: [`neg_log_partial_likelihood`] and [`composite_loss`], the latter
//! adding an orthogonality penalty that discourages redundant features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::normal_two_sided_p;
use crate::survival::SurvivalOutcome;
use crate::table::FeatureTable;

/// Default weight of the orthogonality penalty in [`composite_loss`].
pub const DEFAULT_ORTHOGONALITY_LAMBDA: f64 = 0.001;

/// Default significance threshold used when pruning features.
pub const DEFAULT_PRUNE_ALPHA: f64 = 0.05;

/// Feature normalization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Zero mean, unit sample standard deviation (n - 1 divisor).
    ZScore,
    /// Linear map of the observed range onto `[0, 1]`.
    MinMax,
}

/// Tie handling for the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieMethod {
    /// Efron's correction: the default everywhere in this crate.
    Efron,
    /// Breslow's approximation; equals Efron on tie-free data.
    Breslow,
}

/// Per-feature normalization: `z = (x - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParam {
    pub name: String,
    pub offset: f64,
    pub scale: f64,
}

impl NormParam {
    fn identity(name: &str) -> Self {
        Self {
            name: name.to_string(),
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }
}

/// Direction of a fitted hazard ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectDirection {
    /// HR < 1: the feature reduces hazard.
    Protective,
    /// HR > 1: the feature increases hazard.
    Harmful,
    /// HR exactly 1.
    Neutral,
}

impl EffectDirection {
    pub fn of_hazard_ratio(hr: f64) -> Self {
        if hr < 1.0 {
            EffectDirection::Protective
        } else if hr > 1.0 {
            EffectDirection::Harmful
        } else {
            EffectDirection::Neutral
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EffectDirection::Protective => "protective",
            EffectDirection::Harmful => "harmful",
            EffectDirection::Neutral => "neutral",
        }
    }
}

/// Solver options for [`fit_cox`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxOptions {
    /// Normalization applied before fitting; `None` fits raw features.
    pub normalization: Option<Normalization>,
    /// Newton-Raphson iteration cap.
    pub max_iter: usize,
    /// Convergence threshold on the relative log-likelihood change.
    pub tol: f64,
    /// Step halvings attempted when a full Newton step worsens the loss.
    pub max_step_halvings: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            normalization: Some(Normalization::ZScore),
            max_iter: 100,
            tol: 1e-7,
            max_step_halvings: 10,
        }
    }
}

/// A fitted Cox model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    /// Features in fit order; all parallel vectors follow this order.
    pub feature_names: Vec<String>,
    /// Coefficients on the normalized feature scale.
    pub beta: Vec<f64>,
    /// Standard errors from the inverse observed information.
    pub std_err: Vec<f64>,
    /// `exp(beta)`.
    pub hazard_ratio: Vec<f64>,
    /// `exp(beta - 1.96 * std_err)`.
    pub hr_ci_lower: Vec<f64>,
    /// `exp(beta + 1.96 * std_err)`.
    pub hr_ci_upper: Vec<f64>,
    /// Two-sided Wald p-values against the standard normal.
    pub p_value: Vec<f64>,
    /// Negative log partial likelihood at the fitted beta (the minimized
    /// objective).
    pub neg_log_likelihood: f64,
    /// Normalization parameters captured from the training features.
    pub norm_params: Vec<NormParam>,
    /// Whether the relative log-likelihood change dropped below `tol`.
    pub converged: bool,
    /// Newton iterations performed.
    pub iterations: usize,
    /// Options the model was fitted with; reused by [`prune_refit`].
    pub options: CoxOptions,
}

impl CoxFit {
    /// Hazard-ratio direction per feature.
    pub fn effect_directions(&self) -> Vec<EffectDirection> {
        self.hazard_ratio
            .iter()
            .map(|&hr| EffectDirection::of_hazard_ratio(hr))
            .collect()
    }
}

// ── Normalization ─────────────────────────────────────────────────────────

/// Normalizes every column of `features`, returning the transformed table and
/// the per-feature parameters. A zero-variance (or zero-range) column is an
/// error naming the column.
pub fn standardize(
    features: &FeatureTable,
    mode: Normalization,
) -> Result<(FeatureTable, Vec<NormParam>)> {
    let n = features.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput("standardize rows"));
    }
    let mut params = Vec::with_capacity(features.n_cols());
    let mut columns = Vec::with_capacity(features.n_cols());
    for (j, name) in features.names().iter().enumerate() {
        let col = features.column_at(j);
        let param = match mode {
            Normalization::ZScore => {
                let mean = col.iter().sum::<f64>() / n as f64;
                if n < 2 {
                    return Err(Error::ZeroVariance(name.clone()));
                }
                let ss: f64 = col.iter().map(|&x| (x - mean) * (x - mean)).sum();
                let sd = (ss / (n - 1) as f64).sqrt();
                if sd == 0.0 {
                    return Err(Error::ZeroVariance(name.clone()));
                }
                NormParam {
                    name: name.clone(),
                    offset: mean,
                    scale: sd,
                }
            }
            Normalization::MinMax => {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max == min {
                    return Err(Error::ZeroVariance(name.clone()));
                }
                NormParam {
                    name: name.clone(),
                    offset: min,
                    scale: max - min,
                }
            }
        };
        columns.push(col.iter().map(|&x| param.apply(x)).collect());
        params.push(param);
    }
    let table = FeatureTable::new(features.names().to_vec(), columns)?;
    Ok((table, params))
}

// ── Partial likelihood ────────────────────────────────────────────────────

fn validate_likelihood_inputs(
    beta: &[f64],
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
) -> Result<()> {
    if features.n_rows() == 0 {
        return Err(Error::EmptyInput("cox features"));
    }
    if features.n_rows() != outcomes.len() {
        return Err(Error::LengthMismatch {
            context: "cox features vs outcomes",
            left: features.n_rows(),
            right: outcomes.len(),
        });
    }
    if beta.len() != features.n_cols() {
        return Err(Error::LengthMismatch {
            context: "cox beta vs features",
            left: beta.len(),
            right: features.n_cols(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("beta"));
    }
    if outcomes.iter().any(|o| !o.time.is_finite() || o.time < 0.0) {
        return Err(Error::NonFinite("survival times"));
    }
    if !outcomes.iter().any(|o| o.event) {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Value, gradient, and Hessian of the negative log partial likelihood,
/// computed in a single pass over risk sets.
struct Objective {
    value: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>, // row-major p x p
}

fn objective_parts(
    beta: &[f64],
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    ties: TieMethod,
    want_derivatives: bool,
) -> Objective {
    let n = outcomes.len();
    let p = beta.len();
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| beta[j] * features.column_at(j)[i])
                .sum::<f64>()
        })
        .collect();
    let weight: Vec<f64> = eta.iter().map(|e| e.exp()).collect();

    // Walk times in decreasing order, growing the risk-set accumulators.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcomes[b].time.total_cmp(&outcomes[a].time));

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];

    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];

    let mut num = vec![0.0; p]; // scratch: per-term numerator
    let mut i = 0;
    while i < n {
        let time = outcomes[order[i]].time;
        // Add every subject with this time to the risk set, collecting the
        // tied-event sums as we go.
        let mut d = 0usize;
        let mut t0 = 0.0;
        let mut t1 = vec![0.0; p];
        let mut t2 = vec![0.0; p * p];
        let mut sum_eta = 0.0;
        let mut sum_x = vec![0.0; p];
        let mut j = i;
        while j < n && outcomes[order[j]].time == time {
            let idx = order[j];
            let w = weight[idx];
            s0 += w;
            for a in 0..p {
                let xa = features.column_at(a)[idx];
                s1[a] += w * xa;
                if want_derivatives {
                    for b in a..p {
                        s2[a * p + b] += w * xa * features.column_at(b)[idx];
                    }
                }
            }
            if outcomes[idx].event {
                d += 1;
                t0 += w;
                sum_eta += eta[idx];
                for a in 0..p {
                    let xa = features.column_at(a)[idx];
                    sum_x[a] += xa;
                    t1[a] += w * xa;
                    if want_derivatives {
                        for b in a..p {
                            t2[a * p + b] += w * xa * features.column_at(b)[idx];
                        }
                    }
                }
            }
            j += 1;
        }

        if d > 0 {
            ll += sum_eta;
            if want_derivatives {
                for a in 0..p {
                    grad[a] += sum_x[a];
                }
            }
            let fractions: Vec<f64> = match ties {
                // Efron: the tied sums are withdrawn in d fractional steps.
                TieMethod::Efron => (0..d).map(|r| r as f64 / d as f64).collect(),
                // Breslow: the full risk set is charged d times.
                TieMethod::Breslow => vec![0.0; d],
            };
            for &frac in &fractions {
                let den = s0 - frac * t0;
                ll -= den.ln();
                if want_derivatives {
                    for a in 0..p {
                        num[a] = s1[a] - frac * t1[a];
                        grad[a] -= num[a] / den;
                    }
                    for a in 0..p {
                        for b in a..p {
                            let m2 = s2[a * p + b] - frac * t2[a * p + b];
                            hess[a * p + b] -= m2 / den - num[a] * num[b] / (den * den);
                        }
                    }
                }
            }
        }
        i = j;
    }

    // The loops above accumulate the log likelihood and its derivatives;
    // negate for the minimized objective and mirror the upper triangle.
    let mut hessian = vec![0.0; p * p];
    let mut gradient = vec![0.0; p];
    if want_derivatives {
        for a in 0..p {
            gradient[a] = -grad[a];
            for b in a..p {
                hessian[a * p + b] = -hess[a * p + b];
                hessian[b * p + a] = -hess[a * p + b];
            }
        }
    }
    Objective {
        value: -ll,
        gradient,
        hessian,
    }
}

/// Negative log partial likelihood with Efron tie handling.
pub fn neg_log_partial_likelihood(
    beta: &[f64],
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
) -> Result<f64> {
    neg_log_partial_likelihood_with(beta, features, outcomes, TieMethod::Efron)
}

/// Negative log partial likelihood with an explicit tie method.
pub fn neg_log_partial_likelihood_with(
    beta: &[f64],
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    ties: TieMethod,
) -> Result<f64> {
    validate_likelihood_inputs(beta, features, outcomes)?;
    Ok(objective_parts(beta, features, outcomes, ties, false).value)
}

/// Gradient of the negative log partial likelihood (Efron) with respect to
/// `beta`. This is the negated score function.
pub fn neg_log_pl_gradient(
    beta: &[f64],
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
) -> Result<Vec<f64>> {
    validate_likelihood_inputs(beta, features, outcomes)?;
    Ok(objective_parts(beta, features, outcomes, TieMethod::Efron, true).gradient)
}

// ── Orthogonality penalty and composite loss ──────────────────────────────

/// Mean squared off-diagonal entry of the Pearson correlation matrix of the
/// feature columns. A single column yields 0; a zero-variance column is an
/// error.
pub fn orthogonality_penalty(features: &FeatureTable) -> Result<f64> {
    let p = features.n_cols();
    let n = features.n_rows();
    if p == 0 || n == 0 {
        return Err(Error::EmptyInput("orthogonality features"));
    }
    if p == 1 {
        return Ok(0.0);
    }
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut norms = Vec::with_capacity(p);
    for (j, name) in features.names().iter().enumerate() {
        let col = features.column_at(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = col.iter().map(|&x| x - mean).collect();
        let norm = c.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVariance(name.clone()));
        }
        centered.push(c);
        norms.push(norm);
    }
    let mut sum_sq = 0.0;
    for a in 0..p {
        for b in (a + 1)..p {
            let dot: f64 = centered[a]
                .iter()
                .zip(&centered[b])
                .map(|(x, y)| x * y)
                .sum();
            let r = dot / (norms[a] * norms[b]);
            sum_sq += 2.0 * r * r; // both off-diagonal mirror entries
        }
    }
    Ok(sum_sq / (p * (p - 1)) as f64)
}

/// `neg_log_partial_likelihood + lambda * orthogonality_penalty`: the
/// composite training loss for feature-learning models feeding this toolkit.
pub fn composite_loss(
    beta: &[f64],
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    lambda: f64,
) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    let nll = neg_log_partial_likelihood(beta, features, outcomes)?;
    let penalty = orthogonality_penalty(features)?;
    Ok(nll + lambda * penalty)
}

// ── Symmetric positive definite solves ────────────────────────────────────

/// Cholesky factor of a symmetric positive definite matrix (row-major).
/// A non-positive pivot relative to the largest diagonal entry signals a
/// singular information matrix.
fn cholesky(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let max_diag = (0..p).map(|i| a[i * p + i]).fold(0.0f64, f64::max);
    let tol = max_diag.max(f64::MIN_POSITIVE) * 1e-12;
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > tol) {
            return Err(Error::CollinearFeatures);
        }
        let root = d.sqrt();
        l[j * p + j] = root;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / root;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x
}

fn cholesky_inverse(l: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0; p * p];
    let mut unit = vec![0.0; p];
    for j in 0..p {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[j] = 1.0;
        let col = cholesky_solve(l, p, &unit);
        for i in 0..p {
            inv[i * p + j] = col[i];
        }
    }
    inv
}

// ── Fitting ───────────────────────────────────────────────────────────────

/// Fits a Cox proportional hazards model by Newton-Raphson on the Efron
/// partial likelihood.
///
/// Features are normalized according to `options.normalization` (z-score by
/// default); coefficients, standard errors, and hazard ratios are reported on
/// that normalized scale. Fails on collinear features, zero-variance columns,
/// or cohorts without events.
pub fn fit_cox(
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    options: CoxOptions,
) -> Result<CoxFit> {
    let p = features.n_cols();
    validate_likelihood_inputs(&vec![0.0; p], features, outcomes)?;

    let (work, norm_params) = match options.normalization {
        Some(mode) => standardize(features, mode)?,
        None => (
            features.clone(),
            features
                .names()
                .iter()
                .map(|n| NormParam::identity(n))
                .collect(),
        ),
    };

    let mut beta = vec![0.0; p];
    let mut current = objective_parts(&beta, &work, outcomes, TieMethod::Efron, true);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..options.max_iter {
        iterations += 1;
        let l = cholesky(&current.hessian, p)?;
        let delta = cholesky_solve(&l, p, &current.gradient);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_step_halvings {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&delta)
                .map(|(b, d)| b - step * d)
                .collect();
            let value =
                objective_parts(&candidate, &work, outcomes, TieMethod::Efron, false).value;
            if value.is_finite() && value <= current.value {
                accepted = Some((candidate, value));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, value)) = accepted else {
            // No step length improved the loss: we are at a stationary point
            // up to numeric noise.
            converged = true;
            break;
        };

        let rel_change = (current.value - value).abs() / (current.value.abs() + 1e-10);
        beta = candidate;
        current = objective_parts(&beta, &work, outcomes, TieMethod::Efron, true);
        if rel_change < options.tol {
            converged = true;
            break;
        }
    }

    let l = cholesky(&current.hessian, p)?;
    let cov = cholesky_inverse(&l, p);
    let std_err: Vec<f64> = (0..p).map(|j| cov[j * p + j].max(0.0).sqrt()).collect();
    let hazard_ratio: Vec<f64> = beta.iter().map(|b| b.exp()).collect();
    let hr_ci_lower: Vec<f64> = beta
        .iter()
        .zip(&std_err)
        .map(|(b, s)| (b - 1.96 * s).exp())
        .collect();
    let hr_ci_upper: Vec<f64> = beta
        .iter()
        .zip(&std_err)
        .map(|(b, s)| (b + 1.96 * s).exp())
        .collect();
    let p_value: Vec<f64> = beta
        .iter()
        .zip(&std_err)
        .map(|(b, s)| normal_two_sided_p(b / s))
        .collect();

    Ok(CoxFit {
        feature_names: features.names().to_vec(),
        beta,
        std_err,
        hazard_ratio,
        hr_ci_lower,
        hr_ci_upper,
        p_value,
        neg_log_likelihood: current.value,
        norm_params,
        converged,
        iterations,
        options,
    })
}

/// Drops features with `p > alpha` and refits once on the survivors.
///
/// Returns the original fit unchanged when nothing is dropped; fails with
/// [`Error::NoSignificantFeatures`] when everything would be dropped.
/// `features` must be the table the fit was trained on.
pub fn prune_refit(
    fit: &CoxFit,
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    alpha: f64,
) -> Result<CoxFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let kept: Vec<String> = fit
        .feature_names
        .iter()
        .zip(&fit.p_value)
        .filter(|(_, &p)| p <= alpha)
        .map(|(n, _)| n.clone())
        .collect();
    if kept.is_empty() {
        return Err(Error::NoSignificantFeatures(alpha));
    }
    if kept.len() == fit.feature_names.len() {
        return Ok(fit.clone());
    }
    let selected = features.select(&kept)?;
    fit_cox(&selected, outcomes, fit.options)
}

/// Linear risk scores for new data: the fit's normalization is applied to the
/// matching columns, then `risk = beta . z`.
pub fn predict_risk(fit: &CoxFit, features: &FeatureTable) -> Result<Vec<f64>> {
    let selected = features.select(&fit.feature_names)?;
    let n = selected.n_rows();
    let mut risks = vec![0.0; n];
    for (j, param) in fit.norm_params.iter().enumerate() {
        let col = selected.column_at(j);
        let b = fit.beta[j];
        for (r, &x) in risks.iter_mut().zip(col) {
            *r += b * param.apply(x);
        }
    }
    Ok(risks)
}

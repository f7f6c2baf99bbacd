//! Kaplan-Meier estimation and log-rank testing.
//!
//! The product-limit estimator steps only at event times; censored subjects
//! leave the risk set without adding a step. At tied times, events are
//! processed before censorings, so a subject censored at an event time still
//! counts as at risk for that event. Confidence bands use the log-log
//! (exponential Greenwood) transform, which keeps them inside `[0, 1]`.
//!
//! # Example
//!
//! ```
//! use survkit::survival::{kaplan_meier, SurvivalOutcome};
//!
//! let cohort = vec![
//!     SurvivalOutcome::new(5.0, true),
//!     SurvivalOutcome::new(10.0, true),
//!     SurvivalOutcome::new(15.0, true),
//! ];
//! let km = kaplan_meier(&cohort).unwrap();
//! assert_eq!(km.survival, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::chi_square_sf;

/// z value of the 95% band used throughout the crate.
const Z_95: f64 = 1.96;

/// One subject's follow-up: observed time and whether it ended in an event
/// (`true`) or censoring (`false`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalOutcome {
    pub time: f64,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }
}

/// Kaplan-Meier curve over the event times of a cohort. All vectors run in
/// parallel, one entry per distinct event time, in increasing time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct times at which at least one event occurred.
    pub times: Vec<f64>,
    /// Product-limit survival estimate just after each event time.
    pub survival: Vec<f64>,
    /// Greenwood variance of the survival estimate at each step.
    pub variance: Vec<f64>,
    /// Lower 95% log-log confidence bound, clamped to `[0, 1]`.
    pub ci_lower: Vec<f64>,
    /// Upper 95% log-log confidence bound, clamped to `[0, 1]`.
    pub ci_upper: Vec<f64>,
    /// Subjects at risk just before each event time.
    pub n_at_risk: Vec<usize>,
}

impl KmCurve {
    /// Median survival time: the earliest event time at which the survival
    /// estimate drops to 0.5 or below, if it ever does.
    pub fn median(&self) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.survival)
            .find(|(_, s)| **s <= 0.5)
            .map(|(t, _)| *t)
    }
}

/// Result of a log-rank test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRankResult {
    /// Chi-square statistic (observed minus expected, squared, over the
    /// hypergeometric variance).
    pub statistic: f64,
    /// Upper-tail chi-square probability of the statistic.
    pub p_value: f64,
    /// Degrees of freedom (1 for the two-sample test).
    pub dof: usize,
}

/// One unordered pair's test inside a pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLogRank {
    /// Zero-based indices of the compared groups, `i < j`.
    pub i: usize,
    pub j: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// All-pairs log-rank report with Bonferroni correction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseLogRank {
    /// Every unordered pair, ordered by `(i, j)`.
    pub pairs: Vec<PairLogRank>,
    /// `alpha / C(k, 2)`.
    pub corrected_alpha: f64,
    /// True iff every pair rejects at the corrected threshold.
    pub all_distinct: bool,
}

fn validate_outcomes(outcomes: &[SurvivalOutcome], what: &'static str) -> Result<()> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if outcomes.iter().any(|o| !o.time.is_finite() || o.time < 0.0) {
        return Err(Error::NonFinite("survival times"));
    }
    Ok(())
}

/// Indices of `outcomes` sorted by increasing time.
fn sorted_order(outcomes: &[SurvivalOutcome]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[a].time.total_cmp(&outcomes[b].time));
    order
}

/// Kaplan-Meier product-limit estimate of a single cohort.
///
/// Requires a non-empty cohort with finite non-negative times and at least
/// one event.
pub fn kaplan_meier(outcomes: &[SurvivalOutcome]) -> Result<KmCurve> {
    validate_outcomes(outcomes, "kaplan_meier outcomes")?;
    if !outcomes.iter().any(|o| o.event) {
        return Err(Error::NoEvents);
    }

    let order = sorted_order(outcomes);
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        variance: Vec::new(),
        ci_lower: Vec::new(),
        ci_upper: Vec::new(),
        n_at_risk: Vec::new(),
    };

    let n = outcomes.len();
    let mut survival = 1.0;
    let mut greenwood_sum = 0.0;
    let mut i = 0;
    while i < n {
        let time = outcomes[order[i]].time;
        let n_risk = n - i;
        let mut d = 0usize;
        let mut j = i;
        while j < n && outcomes[order[j]].time == time {
            if outcomes[order[j]].event {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            let nf = n_risk as f64;
            let df = d as f64;
            survival *= (nf - df) / nf;
            let (variance, ci_lower, ci_upper) = if d == n_risk {
                // Everyone remaining died: the estimate hits zero and the
                // Greenwood term is undefined, so the band collapses.
                survival = 0.0;
                (0.0, 0.0, 0.0)
            } else {
                greenwood_sum += df / (nf * (nf - df));
                let variance = survival * survival * greenwood_sum;
                // Log-log band: theta = ln(-ln S) with se sqrt(sum)/|ln S|.
                let half = Z_95 * greenwood_sum.sqrt() / survival.ln().abs();
                let lower = survival.powf(half.exp()).clamp(0.0, 1.0);
                let upper = survival.powf((-half).exp()).clamp(0.0, 1.0);
                (variance, lower, upper)
            };
            curve.times.push(time);
            curve.survival.push(survival);
            curve.variance.push(variance);
            curve.ci_lower.push(ci_lower);
            curve.ci_upper.push(ci_upper);
            curve.n_at_risk.push(n_risk);
        }
        i = j;
    }
    Ok(curve)
}

/// Two-sample log-rank test over the pooled event times of groups `a` and
/// `b`. Classic unweighted form, 1 degree of freedom.
///
/// Errors if either group is empty or the pooled data contain no events.
pub fn logrank_two_sample(a: &[SurvivalOutcome], b: &[SurvivalOutcome]) -> Result<LogRankResult> {
    validate_outcomes(a, "logrank group a")?;
    validate_outcomes(b, "logrank group b")?;
    if !a.iter().chain(b).any(|o| o.event) {
        return Err(Error::DegenerateLogRank);
    }

    // Pooled subjects tagged with group membership, sorted by time.
    let mut pooled: Vec<(f64, bool, bool)> = a
        .iter()
        .map(|o| (o.time, o.event, true))
        .chain(b.iter().map(|o| (o.time, o.event, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut n1 = a.len(); // at risk in group a
    let mut n2 = b.len();
    let mut observed = 0.0; // events in group a
    let mut expected = 0.0;
    let mut variance = 0.0;

    let mut i = 0;
    while i < pooled.len() {
        let time = pooled[i].0;
        let mut d1 = 0usize;
        let mut d2 = 0usize;
        let mut c1 = 0usize;
        let mut c2 = 0usize;
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == time {
            let (_, event, in_a) = pooled[j];
            match (event, in_a) {
                (true, true) => d1 += 1,
                (true, false) => d2 += 1,
                (false, true) => c1 += 1,
                (false, false) => c2 += 1,
            }
            j += 1;
        }
        let d = (d1 + d2) as f64;
        let nt = (n1 + n2) as f64;
        if d > 0.0 && nt > 0.0 {
            let n1f = n1 as f64;
            let n2f = n2 as f64;
            observed += d1 as f64;
            expected += d * n1f / nt;
            if nt > 1.0 {
                variance += d * (n1f / nt) * (n2f / nt) * (nt - d) / (nt - 1.0);
            }
        }
        n1 -= d1 + c1;
        n2 -= d2 + c2;
        i = j;
    }

    let diff = observed - expected;
    let statistic = if variance > 0.0 {
        diff * diff / variance
    } else {
        // Zero variance means the groups never shared a risk set at an event
        // time, so observed equals expected termwise.
        0.0
    };
    Ok(LogRankResult {
        statistic,
        p_value: chi_square_sf(statistic, 1),
        dof: 1,
    })
}

/// Log-rank tests for every unordered pair of `groups` at Bonferroni-corrected
/// threshold `alpha / C(k, 2)`.
///
/// Requires at least two groups and `alpha` in `(0, 1)`. A failing pair test
/// aborts with the offending pair tagged.
pub fn pairwise_logrank(groups: &[Vec<SurvivalOutcome>], alpha: f64) -> Result<PairwiseLogRank> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pairwise log-rank needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let k = groups.len();
    let n_pairs = k * (k - 1) / 2;
    let corrected_alpha = alpha / n_pairs as f64;

    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..k {
        for j in (i + 1)..k {
            let test = logrank_two_sample(&groups[i], &groups[j]).map_err(|e| {
                Error::LogRankPair {
                    i,
                    j,
                    source: Box::new(e),
                }
            })?;
            pairs.push(PairLogRank {
                i,
                j,
                statistic: test.statistic,
                p_value: test.p_value,
            });
        }
    }
    let all_distinct = pairs.iter().all(|p| p.p_value <= corrected_alpha);
    Ok(PairwiseLogRank {
        pairs,
        corrected_alpha,
        all_distinct,
    })
}

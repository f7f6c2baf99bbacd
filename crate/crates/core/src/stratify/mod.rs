//! Transparent risk stratification.
//!
//! Subjects are binned by risk score into equal-count groups; the group
//! count is chosen as the largest one whose groups remain pairwise distinct
//! under Bonferroni-corrected log-rank tests. A TNM-style ordinal baseline,
//! a survival-tree baseline, and linear-SVM boundaries assembled into a
//! decision list complete the module.
//!
//! Group label conventions: quantile and TNM groups number 1 = lowest risk
//! upward. Survival-tree leaves are numbered by ascending Kaplan-Meier
//! median survival (1 = shortest median), with undefined medians last.

mod svm;
mod tree;

pub use svm::{
    assemble_decision_list, fit_boundary_svm, BoundaryHyperplane, DecisionList, SvmOptions,
};
pub use tree::{fit_survival_tree, SurvivalTree, TreeConfig, TreeFit, TreeNode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    auc_at_horizon, bootstrap_ci, concordance_index, BootstrapOptions, MetricResult,
    DEFAULT_HORIZON_DAYS,
};
use crate::survival::{kaplan_meier, logrank_two_sample, KmCurve, SurvivalOutcome};

/// Settings for group-count selection and the attached group metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StratifyOptions {
    /// Family-wise significance level before Bonferroni correction.
    pub alpha: f64,
    /// Largest group count tried (counts 2..=n_max).
    pub n_max: usize,
    /// Restrict the distinctness decision to consecutive group pairs
    /// (correcting over n-1 tests) instead of all pairs.
    pub consecutive_only: bool,
    /// Horizon for the group AUC metric, in days.
    pub horizon_days: f64,
    pub bootstrap: BootstrapOptions,
}

impl Default for StratifyOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_max: 6,
            consecutive_only: false,
            horizon_days: DEFAULT_HORIZON_DAYS,
            bootstrap: BootstrapOptions::default(),
        }
    }
}

/// A stratification with its statistical evidence and group-level metrics.
#[derive(Debug, Clone, Serialize)]
pub struct StratificationResult {
    /// Number of groups; 1 only when no candidate count qualified.
    pub n_groups: usize,
    /// Group index per subject, 1 = lowest risk.
    pub labels: Vec<usize>,
    /// Kaplan-Meier curve per group; a group with zero events gets an empty
    /// (flat at 1.0) curve.
    pub km_per_group: Vec<KmCurve>,
    /// Symmetric log-rank p-value matrix (diagonal 1.0). Pairs whose test is
    /// degenerate (no pooled events) report p = 1.
    pub pairwise_p: Vec<Vec<f64>>,
    /// Bonferroni-corrected per-pair level used for the distinctness claim.
    pub corrected_alpha: f64,
    /// Every tested pair satisfied p <= corrected_alpha.
    pub all_distinct: bool,
    /// Set when no candidate group count qualified and n_groups fell back
    /// to 1.
    pub no_significant_stratification: bool,
    /// Concordance of the group index used as a risk score; None when the
    /// metric is undefined on these groups (e.g. a single group).
    pub group_cindex: Option<MetricResult>,
    /// AUC at the configured horizon of the group index used as a risk
    /// score; None when undefined.
    pub group_auc: Option<MetricResult>,
}

/// Equal-count risk binning: stable sort by risk (original order breaks
/// ties), contiguous bins, earlier bins take the extra subject, bin 1 holds
/// the lowest risks. Returns one label in 1..=n per subject.
pub fn quantile_stratify(risks: &[f64], n: usize) -> Result<Vec<usize>> {
    if risks.is_empty() {
        return Err(Error::EmptyInput("quantile_stratify risks"));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("risk scores"));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 groups, got {n}"
        )));
    }
    if n > risks.len() {
        return Err(Error::InvalidInput(format!(
            "cannot split {} subjects into {n} groups",
            risks.len()
        )));
    }
    let mut order: Vec<usize> = (0..risks.len()).collect();
    order.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));
    let base = risks.len() / n;
    let extra = risks.len() % n;
    let mut labels = vec![0usize; risks.len()];
    let mut cursor = 0;
    for bin in 0..n {
        let size = base + usize::from(bin < extra);
        for _ in 0..size {
            labels[order[cursor]] = bin + 1;
            cursor += 1;
        }
    }
    Ok(labels)
}

/// Cutpoints that reproduce a training stratification on new risk scores:
/// cut k is the smallest training risk in group k+1. Apply with
/// [`apply_cutpoints`].
pub fn risk_cutpoints(risks: &[f64], labels: &[usize]) -> Vec<f64> {
    let n_groups = labels.iter().copied().max().unwrap_or(0);
    (2..=n_groups)
        .map(|g| {
            risks
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == g)
                .map(|(r, _)| *r)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Group for a risk score under training cutpoints: 1 plus the number of
/// cutpoints at or below the score.
pub fn apply_cutpoints(cutpoints: &[f64], risk: f64) -> usize {
    1 + cutpoints.iter().filter(|c| risk >= **c).count()
}

/// One-group-per-code ordinal stratification. Groups are the distinct
/// observed codes in ascending order; every value must come from the
/// declared code set.
pub fn tnm_stratify(stages: &[f64], declared_codes: &[f64]) -> Result<Vec<usize>> {
    if stages.is_empty() {
        return Err(Error::EmptyInput("tnm_stratify stages"));
    }
    if declared_codes.is_empty() {
        return Err(Error::EmptyInput("tnm_stratify declared codes"));
    }
    for &s in stages {
        if !declared_codes.contains(&s) {
            return Err(Error::UnknownStageCode {
                code: s,
                declared: declared_codes.to_vec(),
            });
        }
    }
    let mut observed: Vec<f64> = stages.to_vec();
    observed.sort_by(f64::total_cmp);
    observed.dedup();
    let labels = stages
        .iter()
        .map(|s| 1 + observed.iter().position(|o| o == s).expect("observed"))
        .collect();
    Ok(labels)
}

fn group_outcomes(
    labels: &[usize],
    n_groups: usize,
    outcomes: &[SurvivalOutcome],
) -> Vec<Vec<SurvivalOutcome>> {
    let mut groups = vec![Vec::new(); n_groups];
    for (&l, &o) in labels.iter().zip(outcomes) {
        groups[l - 1].push(o);
    }
    groups
}

/// KM curve for a group, flat at 1.0 (empty series) when it has no events.
fn group_km(outcomes: &[SurvivalOutcome]) -> Result<KmCurve> {
    match kaplan_meier(outcomes) {
        Ok(c) => Ok(c),
        Err(Error::NoEvents) => Ok(KmCurve {
            times: Vec::new(),
            survival: Vec::new(),
            variance: Vec::new(),
            ci_lower: Vec::new(),
            ci_upper: Vec::new(),
            n_at_risk: Vec::new(),
        }),
        Err(e) => Err(e),
    }
}

/// Full symmetric p matrix plus the Bonferroni distinctness verdict over the
/// tested pairs (all pairs, or consecutive pairs only).
fn pairwise_matrix(
    groups: &[Vec<SurvivalOutcome>],
    alpha: f64,
    consecutive_only: bool,
) -> Result<(Vec<Vec<f64>>, f64, bool)> {
    let k = groups.len();
    let mut matrix = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let p = match logrank_two_sample(&groups[i], &groups[j]) {
                Ok(r) => r.p_value,
                Err(Error::DegenerateLogRank) => 1.0,
                Err(e) => {
                    return Err(Error::LogRankPair {
                        i,
                        j,
                        source: Box::new(e),
                    })
                }
            };
            matrix[i][j] = p;
            matrix[j][i] = p;
        }
    }
    let tested = if consecutive_only {
        k - 1
    } else {
        k * (k - 1) / 2
    };
    let corrected = alpha / tested as f64;
    let all_distinct = if consecutive_only {
        (0..k - 1).all(|i| matrix[i][i + 1] <= corrected)
    } else {
        (0..k).all(|i| ((i + 1)..k).all(|j| matrix[i][j] <= corrected))
    };
    Ok((matrix, corrected, all_distinct))
}

/// Bootstrap metric of the group index used as a risk score, or None when
/// the metric is undefined for these groups.
fn group_metric<F>(
    metric: F,
    labels: &[usize],
    outcomes: &[SurvivalOutcome],
    bootstrap: BootstrapOptions,
) -> Result<Option<MetricResult>>
where
    F: Fn(&[f64], &[SurvivalOutcome]) -> Result<f64> + Sync,
{
    let risks: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    match bootstrap_ci(metric, &risks, outcomes, bootstrap) {
        Ok(m) => Ok(Some(m)),
        Err(
            Error::NoComparablePairs
            | Error::DegenerateHorizon(_)
            | Error::NoEvents
            | Error::UnstableBootstrap { .. },
        ) => Ok(None),
        Err(e) => Err(e),
    }
}

fn summarize(
    labels: Vec<usize>,
    n_groups: usize,
    outcomes: &[SurvivalOutcome],
    options: &StratifyOptions,
    no_significant_stratification: bool,
) -> Result<StratificationResult> {
    let groups = group_outcomes(&labels, n_groups, outcomes);
    let km_per_group = groups
        .iter()
        .map(|g| group_km(g))
        .collect::<Result<Vec<_>>>()?;
    let (pairwise_p, corrected_alpha, all_distinct) = if n_groups >= 2 {
        pairwise_matrix(&groups, options.alpha, options.consecutive_only)?
    } else {
        (vec![vec![1.0]], options.alpha, false)
    };
    let group_cindex = group_metric(concordance_index, &labels, outcomes, options.bootstrap)?;
    let horizon = options.horizon_days;
    let group_auc = group_metric(
        |r, o| auc_at_horizon(r, o, horizon),
        &labels,
        outcomes,
        options.bootstrap,
    )?;
    Ok(StratificationResult {
        n_groups,
        labels,
        km_per_group,
        pairwise_p,
        corrected_alpha,
        all_distinct,
        no_significant_stratification,
        group_cindex,
        group_auc,
    })
}

/// Tries group counts 2..=n_max and keeps the largest one whose groups are
/// pairwise distinct under Bonferroni-corrected log-rank tests. When none
/// qualifies the result has a single group and the
/// `no_significant_stratification` flag set.
pub fn select_group_count(
    risks: &[f64],
    outcomes: &[SurvivalOutcome],
    options: &StratifyOptions,
) -> Result<StratificationResult> {
    if risks.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            context: "select_group_count risks vs outcomes",
            left: risks.len(),
            right: outcomes.len(),
        });
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("select_group_count outcomes"));
    }
    if !outcomes.iter().any(|o| o.event) {
        return Err(Error::NoEvents);
    }
    if options.n_max < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_max must be at least 2, got {}",
            options.n_max
        )));
    }

    let candidates: Vec<usize> = (2..=options.n_max.min(risks.len())).collect();
    let evaluated: Vec<(usize, Vec<usize>, bool)> = candidates
        .par_iter()
        .map(|&n| {
            let labels = quantile_stratify(risks, n)?;
            let groups = group_outcomes(&labels, n, outcomes);
            let (_, _, all_distinct) =
                pairwise_matrix(&groups, options.alpha, options.consecutive_only)?;
            Ok((n, labels, all_distinct))
        })
        .collect::<Result<_>>()?;

    match evaluated
        .into_iter()
        .filter(|(_, _, ok)| *ok)
        .max_by_key(|(n, _, _)| *n)
    {
        Some((n, labels, _)) => summarize(labels, n, outcomes, options, false),
        None => summarize(vec![1; risks.len()], 1, outcomes, options, true),
    }
}

/// Ordinal-stage baseline stratification with the full evidence summary
/// attached. No significance filtering is applied: the grouping is reported
/// as-is and the p-value matrix is informational.
pub fn tnm_stratification(
    stages: &[f64],
    declared_codes: &[f64],
    outcomes: &[SurvivalOutcome],
    options: &StratifyOptions,
) -> Result<StratificationResult> {
    if stages.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            context: "tnm_stratification stages vs outcomes",
            left: stages.len(),
            right: outcomes.len(),
        });
    }
    let labels = tnm_stratify(stages, declared_codes)?;
    let n_groups = labels.iter().copied().max().expect("non-empty");
    summarize(labels, n_groups, outcomes, options, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::stream_rng;
    use rand::Rng;

    /// Exponential survival times with hazard `h`, all observed events.
    fn exp_cohort(h: f64, n: usize, seed: u64) -> Vec<SurvivalOutcome> {
        let mut rng = stream_rng(seed, 0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                SurvivalOutcome::new(-u.ln() / h, true)
            })
            .collect()
    }

    fn fast_options() -> StratifyOptions {
        StratifyOptions {
            bootstrap: BootstrapOptions {
                n_resamples: 100,
                ..BootstrapOptions::default()
            },
            ..StratifyOptions::default()
        }
    }

    #[test]
    fn quantile_examples() {
        let risks: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let labels = quantile_stratify(&risks, 2).unwrap();
        assert_eq!(labels, vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);

        let risks: Vec<f64> = (1..=6).map(|i| i as f64).collect();
        assert_eq!(quantile_stratify(&risks, 6).unwrap(), vec![1, 2, 3, 4, 5, 6]);

        // 7 subjects into 2 groups: earlier bin takes the extra subject.
        let risks: Vec<f64> = (1..=7).map(|i| i as f64).collect();
        let labels = quantile_stratify(&risks, 2).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 4);
        assert_eq!(labels.iter().filter(|&&l| l == 2).count(), 3);

        assert!(quantile_stratify(&risks, 8).is_err());
        assert!(quantile_stratify(&risks, 1).is_err());
        assert!(quantile_stratify(&[], 2).is_err());
        assert!(quantile_stratify(&[1.0, f64::NAN], 2).is_err());
    }

    #[test]
    fn quantile_ties_break_by_original_index() {
        let labels = quantile_stratify(&[5.0, 5.0, 5.0, 5.0], 2).unwrap();
        assert_eq!(labels, vec![1, 1, 2, 2]);
    }

    #[test]
    fn quantile_invariant_under_increasing_transform() {
        let mut rng = stream_rng(3, 1);
        for _ in 0..20 {
            let risks: Vec<f64> = (0..37).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let transformed: Vec<f64> = risks.iter().map(|r| (0.5 * r).exp() + 7.0).collect();
            for n in 2..=6 {
                assert_eq!(
                    quantile_stratify(&risks, n).unwrap(),
                    quantile_stratify(&transformed, n).unwrap()
                );
            }
        }
    }

    #[test]
    fn quantile_group_sizes_and_risk_ordering() {
        let mut rng = stream_rng(4, 2);
        let risks: Vec<f64> = (0..53).map(|_| rng.gen_range(0.0..1.0)).collect();
        for n in 2..=6 {
            let labels = quantile_stratify(&risks, n).unwrap();
            let mut sizes = vec![0usize; n];
            let mut sums = vec![0.0; n];
            for (&l, &r) in labels.iter().zip(&risks) {
                sizes[l - 1] += 1;
                sums[l - 1] += r;
            }
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            assert!(max - min <= 1, "sizes {sizes:?}");
            for k in 0..n - 1 {
                let mean_k = sums[k] / sizes[k] as f64;
                let mean_next = sums[k + 1] / sizes[k + 1] as f64;
                assert!(mean_next >= mean_k);
            }
        }
    }

    #[test]
    fn cutpoints_reproduce_training_labels() {
        let mut rng = stream_rng(5, 3);
        let risks: Vec<f64> = (0..41).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels = quantile_stratify(&risks, 4).unwrap();
        let cuts = risk_cutpoints(&risks, &labels);
        assert_eq!(cuts.len(), 3);
        for (r, &l) in risks.iter().zip(&labels) {
            assert_eq!(apply_cutpoints(&cuts, *r), l);
        }
        // Scores outside the training range land in the end groups.
        assert_eq!(apply_cutpoints(&cuts, -10.0), 1);
        assert_eq!(apply_cutpoints(&cuts, 10.0), 4);
    }

    #[test]
    fn two_populations_with_large_hazard_ratio_separate() {
        let mut outcomes = exp_cohort(0.02, 200, 10);
        outcomes.extend(exp_cohort(0.2, 200, 11));
        let risks: Vec<f64> = (0..400).map(|i| if i < 200 { 1.0 } else { 2.0 }).collect();
        let mut options = fast_options();
        options.horizon_days = 20.0;
        let result = select_group_count(&risks, &outcomes, &options).unwrap();
        assert!(result.n_groups >= 2);
        assert!(result.all_distinct);
        assert!(!result.no_significant_stratification);
        let c = result.group_cindex.expect("computable");
        assert!(c.point > 0.6 && c.point <= 1.0);
        assert!(result.group_auc.is_some());
        // Low-risk group survives longer: its KM median is later.
        let m1 = result.km_per_group[0].median();
        let m2 = result.km_per_group.last().unwrap().median();
        assert!(m1.unwrap() > m2.unwrap());
    }

    #[test]
    fn identical_outcomes_yield_flagged_single_group() {
        let outcomes = vec![SurvivalOutcome::new(10.0, true); 30];
        let risks: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let result = select_group_count(&risks, &outcomes, &fast_options()).unwrap();
        assert_eq!(result.n_groups, 1);
        assert!(result.no_significant_stratification);
        assert!(!result.all_distinct);
        assert!(result.labels.iter().all(|&l| l == 1));
        assert!(result.group_cindex.is_none());
        assert_eq!(result.pairwise_p, vec![vec![1.0]]);
    }

    #[test]
    fn six_well_separated_strata_select_six_groups() {
        let mut outcomes = Vec::new();
        let mut risks = Vec::new();
        for k in 0..6 {
            let h = 0.01 * 3.0_f64.powi(k as i32);
            outcomes.extend(exp_cohort(h, 120, 20 + k as u64));
            risks.extend(std::iter::repeat(k as f64).take(120));
        }
        let mut options = fast_options();
        options.horizon_days = 30.0;
        let result = select_group_count(&risks, &outcomes, &options).unwrap();
        assert_eq!(result.n_groups, 6, "pairwise p: {:?}", result.pairwise_p);
        assert!(result.all_distinct);
        // Pairwise matrix is symmetric with unit diagonal.
        for i in 0..6 {
            assert_eq!(result.pairwise_p[i][i], 1.0);
            for j in 0..6 {
                assert_eq!(result.pairwise_p[i][j], result.pairwise_p[j][i]);
            }
        }
        // Group index works as a risk score.
        assert!(result.group_cindex.unwrap().point > 0.7);
    }

    #[test]
    fn selection_is_deterministic() {
        let mut outcomes = exp_cohort(0.03, 150, 31);
        outcomes.extend(exp_cohort(0.3, 150, 32));
        let mut rng = stream_rng(33, 0);
        let risks: Vec<f64> = (0..300)
            .map(|i| if i < 150 { 0.0 } else { 1.0 } + rng.gen_range(0.0..0.1))
            .collect();
        let mut options = fast_options();
        options.horizon_days = 15.0;
        let a = select_group_count(&risks, &outcomes, &options).unwrap();
        let b = select_group_count(&risks, &outcomes, &options).unwrap();
        assert_eq!(a.n_groups, b.n_groups);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.pairwise_p, b.pairwise_p);
    }

    #[test]
    fn consecutive_only_mode_corrects_over_fewer_pairs() {
        let mut outcomes = Vec::new();
        let mut risks = Vec::new();
        for k in 0..3 {
            let h = 0.01 * 4.0_f64.powi(k as i32);
            outcomes.extend(exp_cohort(h, 100, 40 + k as u64));
            risks.extend(std::iter::repeat(k as f64).take(100));
        }
        let mut options = fast_options();
        options.consecutive_only = true;
        options.n_max = 3;
        options.horizon_days = 40.0;
        let result = select_group_count(&risks, &outcomes, &options).unwrap();
        assert_eq!(result.n_groups, 3);
        // Correction divides by n-1 = 2 pairs, not C(3,2) = 3.
        assert!((result.corrected_alpha - 0.05 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn tnm_examples() {
        let stages = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 2.0, 3.0];
        let declared: Vec<f64> = (0..=5).map(|i| i as f64).collect();
        let labels = tnm_stratify(&stages, &declared).unwrap();
        assert_eq!(labels, vec![1, 2, 3, 4, 5, 6, 3, 4]);

        assert_eq!(tnm_stratify(&[2.0, 2.0], &declared).unwrap(), vec![1, 1]);

        match tnm_stratify(&[7.0], &declared) {
            Err(Error::UnknownStageCode { code, declared }) => {
                assert_eq!(code, 7.0);
                assert_eq!(declared.len(), 6);
            }
            other => panic!("expected UnknownStageCode, got {other:?}"),
        }
    }

    #[test]
    fn tnm_stratification_reports_without_filtering() {
        // Two stages whose outcomes barely differ: reported as-is, with the
        // informational p matrix attached and no fallback to one group.
        let mut outcomes = exp_cohort(0.05, 60, 50);
        outcomes.extend(exp_cohort(0.055, 60, 51));
        let stages: Vec<f64> = (0..120).map(|i| if i < 60 { 1.0 } else { 2.0 }).collect();
        let mut options = fast_options();
        options.horizon_days = 15.0;
        let result = tnm_stratification(&stages, &[1.0, 2.0], &outcomes, &options).unwrap();
        assert_eq!(result.n_groups, 2);
        assert!(!result.no_significant_stratification);
        assert_eq!(result.km_per_group.len(), 2);
        assert!(result.pairwise_p[0][1] > 0.0);
    }

    #[test]
    fn zero_event_group_gets_flat_curve() {
        let mut outcomes = exp_cohort(0.1, 40, 60);
        outcomes.extend((0..40).map(|_| SurvivalOutcome::new(50.0, false)));
        let stages: Vec<f64> = (0..80).map(|i| if i < 40 { 1.0 } else { 2.0 }).collect();
        let mut options = fast_options();
        options.horizon_days = 10.0;
        let result = tnm_stratification(&stages, &[1.0, 2.0], &outcomes, &options).unwrap();
        assert!(result.km_per_group[1].times.is_empty());
        assert!(!result.km_per_group[0].times.is_empty());
    }
}

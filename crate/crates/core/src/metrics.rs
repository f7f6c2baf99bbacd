//! Discrimination metrics and bootstrap confidence intervals.
//!
//! [`concordance_index`] is Harrell's C over usable pairs, [`auc_at_horizon`]
//! scores binary status at a fixed time horizon (two years by default), and
//! [`bootstrap_ci`] wraps any metric in a percentile bootstrap whose resample
//! streams are derived from `(seed, resample index)`, making results
//! independent of thread scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{interpolated_quantile, rank_auc, stream_rng};
use crate::survival::SurvivalOutcome;

/// Default AUC horizon: two years in days.
pub const DEFAULT_HORIZON_DAYS: f64 = 730.0;

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    /// Number of resamples drawn.
    pub n_resamples: usize,
    /// Central interval mass, e.g. 0.95.
    pub level: f64,
    /// Base seed; resample `r` uses stream `r` of this seed.
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// A metric point estimate with its percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    /// Metric on the full sample.
    pub point: f64,
    /// Lower percentile endpoint.
    pub ci_lower: f64,
    /// Upper percentile endpoint.
    pub ci_upper: f64,
    /// Resamples requested.
    pub n_bootstrap: usize,
    /// Resamples discarded because the metric was not computable on them.
    pub n_degenerate: usize,
    /// Seed the resample streams were derived from.
    pub seed: u64,
}

fn validate_risks(risks: &[f64], outcomes: &[SurvivalOutcome]) -> Result<()> {
    if risks.is_empty() {
        return Err(Error::EmptyInput("risks"));
    }
    if risks.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            context: "risks vs outcomes",
            left: risks.len(),
            right: outcomes.len(),
        });
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("risks"));
    }
    if outcomes.iter().any(|o| !o.time.is_finite() || o.time < 0.0) {
        return Err(Error::NonFinite("survival times"));
    }
    Ok(())
}

/// Harrell's concordance index.
///
/// A pair is comparable when the earlier subject has an event, or when times
/// are tied and exactly one subject has an event (scored against the censored
/// subject having lower risk). Concordant pairs score 1, risk ties score 0.5.
/// Fails when no pair is comparable.
pub fn concordance_index(risks: &[f64], outcomes: &[SurvivalOutcome]) -> Result<f64> {
    validate_risks(risks, outcomes)?;
    let n = risks.len();
    let mut comparable = 0u64;
    let mut score = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            // Orient the pair so `a` is the subject expected to fail first.
            let (a, b) = if outcomes[i].time < outcomes[j].time {
                (i, j)
            } else if outcomes[j].time < outcomes[i].time {
                (j, i)
            } else {
                // Tied times: comparable only when exactly one is an event.
                match (outcomes[i].event, outcomes[j].event) {
                    (true, false) => (i, j),
                    (false, true) => (j, i),
                    _ => continue,
                }
            };
            if !outcomes[a].event {
                continue;
            }
            comparable += 1;
            if risks[a] > risks[b] {
                score += 1.0;
            } else if risks[a] == risks[b] {
                score += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(score / comparable as f64)
}

/// AUROC of `risks` against event status at `horizon`.
///
/// Positives are events at or before the horizon; negatives are subjects
/// observed beyond it; subjects censored at or before the horizon carry no
/// label and are excluded. Ties in risk get the midrank correction. Fails when
/// either class is empty after exclusion.
pub fn auc_at_horizon(risks: &[f64], outcomes: &[SurvivalOutcome], horizon: f64) -> Result<f64> {
    validate_risks(risks, outcomes)?;
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, o) in risks.iter().zip(outcomes) {
        if o.time > horizon {
            values.push(*r);
            labels.push(false);
        } else if o.event {
            values.push(*r);
            labels.push(true);
        }
        // Censored at or before the horizon: status unknown, excluded.
    }
    rank_auc(&values, &labels).ok_or(Error::DegenerateHorizon(horizon))
}

/// Percentile bootstrap interval around `metric`.
///
/// The point estimate is computed on the full sample (an error there
/// propagates). Resample `r` draws `n` subject indices with replacement from
/// the ChaCha stream `(seed, r)`; resamples on which the metric fails are
/// discarded and counted. If more than half are discarded the interval is
/// deemed unstable and an error is returned. Endpoints are interpolated order
/// statistics of the surviving resample values.
pub fn bootstrap_ci<F>(
    metric: F,
    risks: &[f64],
    outcomes: &[SurvivalOutcome],
    options: BootstrapOptions,
) -> Result<MetricResult>
where
    F: Fn(&[f64], &[SurvivalOutcome]) -> Result<f64> + Sync,
{
    validate_risks(risks, outcomes)?;
    if options.n_resamples == 0 {
        return Err(Error::InvalidConfig("n_resamples must be >= 1".into()));
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "bootstrap level must lie in (0, 1), got {}",
            options.level
        )));
    }
    let point = metric(risks, outcomes)?;
    let n = risks.len();

    let values: Vec<Option<f64>> = (0..options.n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(options.seed, r as u64);
            let mut res_risks = Vec::with_capacity(n);
            let mut res_outcomes = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = rng.gen_range(0..n);
                res_risks.push(risks[idx]);
                res_outcomes.push(outcomes[idx]);
            }
            metric(&res_risks, &res_outcomes).ok()
        })
        .collect();

    let mut kept: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let n_degenerate = options.n_resamples - kept.len();
    if 2 * n_degenerate > options.n_resamples {
        return Err(Error::UnstableBootstrap {
            degenerate: n_degenerate,
            total: options.n_resamples,
        });
    }
    kept.sort_by(f64::total_cmp);
    let tail = (1.0 - options.level) / 2.0;
    Ok(MetricResult {
        point,
        ci_lower: interpolated_quantile(&kept, tail),
        ci_upper: interpolated_quantile(&kept, 1.0 - tail),
        n_bootstrap: options.n_resamples,
        n_degenerate,
        seed: options.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(spec: &[(f64, bool)]) -> Vec<SurvivalOutcome> {
        spec.iter().map(|&(t, e)| SurvivalOutcome::new(t, e)).collect()
    }

    // ── Concordance ───────────────────────────────────────────────────────

    #[test]
    fn cindex_perfect_reversed_and_tied() {
        let o = outcomes(&[(1.0, true), (2.0, true), (3.0, true), (4.0, true)]);
        // Earlier death = higher risk: perfectly concordant.
        assert_eq!(concordance_index(&[4.0, 3.0, 2.0, 1.0], &o).unwrap(), 1.0);
        assert_eq!(concordance_index(&[1.0, 2.0, 3.0, 4.0], &o).unwrap(), 0.0);
        assert_eq!(concordance_index(&[5.0, 5.0, 5.0, 5.0], &o).unwrap(), 0.5);
    }

    #[test]
    fn cindex_single_comparable_pair() {
        let o = outcomes(&[(1.0, true), (2.0, false)]);
        assert_eq!(concordance_index(&[2.0, 1.0], &o).unwrap(), 1.0);
    }

    #[test]
    fn cindex_censored_pairs_skipped() {
        // Censored-early subject forms no comparable pair with later ones.
        let o = outcomes(&[(1.0, false), (2.0, true), (3.0, true)]);
        // Only (2, 3) and ... pair (1,2): earlier censored -> skip;
        // (1,3): skip; (2,3): comparable.
        let c = concordance_index(&[0.0, 2.0, 1.0], &o).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn cindex_tied_time_exactly_one_event() {
        let o = outcomes(&[(5.0, true), (5.0, false)]);
        // The event subject should carry the higher risk.
        assert_eq!(concordance_index(&[3.0, 1.0], &o).unwrap(), 1.0);
        assert_eq!(concordance_index(&[1.0, 3.0], &o).unwrap(), 0.0);
        // Both events at the same time: no comparable pair.
        let both = outcomes(&[(5.0, true), (5.0, true)]);
        assert!(matches!(
            concordance_index(&[1.0, 2.0], &both),
            Err(Error::NoComparablePairs)
        ));
    }

    #[test]
    fn cindex_matches_brute_force_on_uncensored_data() {
        // Independent oracle: count concordant pairs directly.
        let mut risks = Vec::new();
        let mut times = Vec::new();
        let mut state = 7u64;
        for _ in 0..60 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            risks.push((state >> 11) as f64 / (1u64 << 53) as f64);
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            times.push(1.0 + (state >> 11) as f64 / (1u64 << 53) as f64);
        }
        let o: Vec<SurvivalOutcome> = times.iter().map(|&t| SurvivalOutcome::new(t, true)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..60 {
            for j in 0..60 {
                if i != j && times[i] < times[j] {
                    den += 1.0;
                    if risks[i] > risks[j] {
                        num += 1.0;
                    } else if risks[i] == risks[j] {
                        num += 0.5;
                    }
                }
            }
        }
        let oracle = num / den;
        assert!((concordance_index(&risks, &o).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn cindex_complement_under_risk_negation() {
        let o = outcomes(&[(1.0, true), (3.0, false), (2.0, true), (5.0, true), (4.0, false)]);
        let risks = [0.9, 0.1, 0.7, 0.2, 0.4];
        let neg: Vec<f64> = risks.iter().map(|r| -r).collect();
        let c = concordance_index(&risks, &o).unwrap();
        let cn = concordance_index(&neg, &o).unwrap();
        assert!((c + cn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cindex_invariant_under_monotone_transform() {
        let o = outcomes(&[(1.0, true), (3.0, false), (2.0, true), (5.0, true), (4.0, false)]);
        let risks = [0.9, 0.1, 0.7, 0.2, 0.4];
        let transformed: Vec<f64> = risks.iter().map(|r| (3.0f64 * r).exp() + 1.0).collect();
        assert_eq!(
            concordance_index(&risks, &o).unwrap(),
            concordance_index(&transformed, &o).unwrap()
        );
    }

    // ── AUC at horizon ────────────────────────────────────────────────────

    #[test]
    fn auc_labels_and_exclusion() {
        // Subject censored before the horizon is excluded: pair count drops
        // from 2 to 1 and the AUC flips from 0.5 to 1.0.
        let o = outcomes(&[(50.0, true), (150.0, false), (50.0, false)]);
        let risks = [2.0, 1.0, 3.0];
        assert_eq!(auc_at_horizon(&risks, &o, 100.0).unwrap(), 1.0);
    }

    #[test]
    fn auc_boundary_semantics() {
        // Event exactly at the horizon is positive.
        let o = outcomes(&[(100.0, true), (150.0, false)]);
        assert_eq!(auc_at_horizon(&[2.0, 1.0], &o, 100.0).unwrap(), 1.0);
        // Censored exactly at the horizon is excluded.
        let o2 = outcomes(&[(100.0, false), (150.0, false), (80.0, true)]);
        assert_eq!(auc_at_horizon(&[9.0, 1.0, 2.0], &o2, 100.0).unwrap(), 1.0);
    }

    #[test]
    fn auc_degenerate_classes_error() {
        let all_pos = outcomes(&[(10.0, true), (20.0, true)]);
        assert!(matches!(
            auc_at_horizon(&[1.0, 2.0], &all_pos, 100.0),
            Err(Error::DegenerateHorizon(_))
        ));
        let all_excluded = outcomes(&[(10.0, false), (20.0, false)]);
        assert!(matches!(
            auc_at_horizon(&[1.0, 2.0], &all_excluded, 100.0),
            Err(Error::DegenerateHorizon(_))
        ));
        assert!(auc_at_horizon(&[1.0], &outcomes(&[(1.0, true)]), 0.0).is_err());
    }

    #[test]
    fn auc_with_risk_ties_uses_midranks() {
        let o = outcomes(&[(10.0, true), (10.0, true), (900.0, false), (900.0, false)]);
        assert_eq!(auc_at_horizon(&[1.0, 1.0, 1.0, 1.0], &o, 730.0).unwrap(), 0.5);
    }

    // ── Bootstrap ─────────────────────────────────────────────────────────

    fn fixture() -> (Vec<f64>, Vec<SurvivalOutcome>) {
        let risks: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let o: Vec<SurvivalOutcome> = (0..40)
            .map(|i| SurvivalOutcome::new(1.0 + ((i * 37) % 40) as f64, i % 4 != 0))
            .collect();
        (risks, o)
    }

    #[test]
    fn bootstrap_constant_metric_degenerates_to_point() {
        let (risks, o) = fixture();
        let r = bootstrap_ci(|_, _| Ok(0.7), &risks, &o, BootstrapOptions::default()).unwrap();
        assert_eq!((r.point, r.ci_lower, r.ci_upper), (0.7, 0.7, 0.7));
        assert_eq!(r.n_degenerate, 0);
    }

    #[test]
    fn bootstrap_same_seed_reproduces_exactly() {
        let (risks, o) = fixture();
        let opts = BootstrapOptions {
            n_resamples: 200,
            ..Default::default()
        };
        let a = bootstrap_ci(concordance_index, &risks, &o, opts).unwrap();
        let b = bootstrap_ci(concordance_index, &risks, &o, opts).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci(
            concordance_index,
            &risks,
            &o,
            BootstrapOptions {
                seed: 1,
                ..opts
            },
        )
        .unwrap();
        assert_ne!((a.ci_lower, a.ci_upper), (c.ci_lower, c.ci_upper));
    }

    #[test]
    fn bootstrap_point_error_propagates() {
        let (risks, o) = fixture();
        let err = bootstrap_ci(
            |_, _| Err(Error::NoComparablePairs),
            &risks,
            &o,
            BootstrapOptions::default(),
        );
        assert!(matches!(err, Err(Error::NoComparablePairs)));
    }

    #[test]
    fn bootstrap_mostly_degenerate_resamples_error() {
        let (risks, o) = fixture();
        // Succeeds on the full sample (all 40 risks distinct) but fails on
        // any resample containing a duplicated index.
        let picky = |r: &[f64], _: &[SurvivalOutcome]| {
            let mut sorted = r.to_vec();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                Err(Error::NoComparablePairs)
            } else {
                Ok(0.5)
            }
        };
        let err = bootstrap_ci(picky, &risks, &o, BootstrapOptions::default());
        assert!(matches!(err, Err(Error::UnstableBootstrap { .. })));
    }

    #[test]
    fn bootstrap_endpoints_are_interpolated_order_statistics() {
        // Independent re-derivation of the resample values and quantiles.
        use rand::Rng;
        let (risks, o) = fixture();
        let opts = BootstrapOptions {
            n_resamples: 200,
            level: 0.95,
            seed: 9,
        };
        let res = bootstrap_ci(concordance_index, &risks, &o, opts).unwrap();

        let n = risks.len();
        let mut values = Vec::new();
        for r in 0..opts.n_resamples {
            let mut rng = crate::stats::stream_rng(opts.seed, r as u64);
            let mut rr = Vec::with_capacity(n);
            let mut ro = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = rng.gen_range(0..n);
                rr.push(risks[idx]);
                ro.push(o[idx]);
            }
            if let Ok(v) = concordance_index(&rr, &ro) {
                values.push(v);
            }
        }
        values.sort_by(f64::total_cmp);
        assert_eq!(res.ci_lower, interpolated_quantile(&values, 0.025));
        assert_eq!(res.ci_upper, interpolated_quantile(&values, 0.975));
    }
}

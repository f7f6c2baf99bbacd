//! Survival tree baseline.
//!
//! A small binary tree grown best-first: at every step the pending leaf
//! whose best admissible split has the largest log-rank statistic is split,
//! until the leaf budget is reached or no split qualifies. Splits must be
//! significant at `split_alpha` and leave at least `min_leaf` subjects on
//! each side. Leaves are numbered by ascending Kaplan-Meier median survival
//! (group 1 = shortest median, undefined medians last), so the group index
//! reads as a risk rank: lower group number, higher risk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{kaplan_meier, logrank_two_sample, SurvivalOutcome};
use crate::table::FeatureTable;

/// Growth limits for [`fit_survival_tree`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Minimum subjects on each side of a split.
    pub min_leaf: usize,
    /// Maximum number of leaves.
    pub max_leaves: usize,
    /// Log-rank significance level a split must reach.
    pub split_alpha: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            min_leaf: 30,
            max_leaves: 6,
            split_alpha: 0.05,
        }
    }
}

impl TreeConfig {
    fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if self.max_leaves == 0 {
            return Err(Error::InvalidConfig("max_leaves must be at least 1".into()));
        }
        if !(self.split_alpha > 0.0 && self.split_alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split_alpha must lie in (0, 1), got {}",
                self.split_alpha
            )));
        }
        Ok(())
    }
}

/// A node of a fitted [`SurvivalTree`]. Children are indices into the node
/// arena; rows with `feature <= threshold` descend left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Risk group, 1 = shortest median survival.
        group: usize,
        n_subjects: usize,
        /// Kaplan-Meier median of the leaf, None when undefined.
        median: Option<f64>,
    },
}

/// A fitted survival tree; node 0 is the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalTree {
    pub feature_names: Vec<String>,
    pub nodes: Vec<TreeNode>,
}

/// A fitted tree together with the training-row group labels it induces.
#[derive(Debug, Clone)]
pub struct TreeFit {
    pub tree: SurvivalTree,
    /// Group per training row, 1 = highest risk.
    pub labels: Vec<usize>,
}

impl SurvivalTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Risk group for a feature row (same column order as the training
    /// table).
    pub fn assign_row(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch {
                context: "assign_row features",
                left: row.len(),
                right: self.feature_names.len(),
            });
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { group, .. } => return Ok(*group),
            }
        }
    }

    /// Indented textual form of the decision structure.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(0, 0, &mut out);
        out
    }

    fn render_node(&self, at: usize, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match &self.nodes[at] {
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push_str(&format!(
                    "{pad}if {} <= {threshold}:\n",
                    self.feature_names[*feature]
                ));
                self.render_node(*left, indent + 1, out);
                out.push_str(&format!("{pad}else:\n"));
                self.render_node(*right, indent + 1, out);
            }
            TreeNode::Leaf {
                group,
                n_subjects,
                median,
            } => {
                let med = match median {
                    Some(m) => format!("{m}"),
                    None => "undefined".to_string(),
                };
                out.push_str(&format!(
                    "{pad}group {group} (n={n_subjects}, median={med})\n"
                ));
            }
        }
    }
}

/// Best admissible split of a row set, if any.
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    statistic: f64,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

/// A grown-but-unnumbered leaf awaiting either a split or finalization.
struct PendingLeaf {
    slot: usize,
    rows: Vec<usize>,
    split: Option<SplitCandidate>,
}

fn best_split(
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    rows: &[usize],
    config: &TreeConfig,
) -> Result<Option<SplitCandidate>> {
    let mut best: Option<SplitCandidate> = None;
    for feature in 0..features.names().len() {
        let column = features.column_at(feature);
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
        // Thresholds sit at midpoints between consecutive distinct values.
        for cut in 1..order.len() {
            let lo = column[order[cut - 1]];
            let hi = column[order[cut]];
            if lo == hi {
                continue;
            }
            if cut < config.min_leaf || order.len() - cut < config.min_leaf {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            let left: Vec<SurvivalOutcome> =
                order[..cut].iter().map(|&i| outcomes[i]).collect();
            let right: Vec<SurvivalOutcome> =
                order[cut..].iter().map(|&i| outcomes[i]).collect();
            let test = match logrank_two_sample(&left, &right) {
                Ok(t) => t,
                Err(Error::DegenerateLogRank) => continue,
                Err(e) => return Err(e),
            };
            if test.p_value > config.split_alpha {
                continue;
            }
            // Strict improvement keeps the first qualifying split: lowest
            // feature index, then lowest threshold.
            if best
                .as_ref()
                .map(|b| test.statistic > b.statistic)
                .unwrap_or(true)
            {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    statistic: test.statistic,
                    left_rows: order[..cut].to_vec(),
                    right_rows: order[cut..].to_vec(),
                });
            }
        }
    }
    Ok(best)
}

/// Grows a survival tree best-first on the given features and outcomes.
pub fn fit_survival_tree(
    features: &FeatureTable,
    outcomes: &[SurvivalOutcome],
    config: &TreeConfig,
) -> Result<TreeFit> {
    config.validate()?;
    if features.n_rows() != outcomes.len() {
        return Err(Error::LengthMismatch {
            context: "fit_survival_tree rows vs outcomes",
            left: features.n_rows(),
            right: outcomes.len(),
        });
    }
    if outcomes.len() < 2 * config.min_leaf {
        return Err(Error::InvalidInput(format!(
            "survival tree needs at least {} subjects (2 x min_leaf), got {}",
            2 * config.min_leaf,
            outcomes.len()
        )));
    }
    if outcomes.iter().any(|o| !o.time.is_finite() || o.time < 0.0) {
        return Err(Error::NonFinite("survival times"));
    }

    let mut nodes: Vec<Option<TreeNode>> = vec![None];
    let root_rows: Vec<usize> = (0..outcomes.len()).collect();
    let root_split = best_split(features, outcomes, &root_rows, config)?;
    let mut pending = vec![PendingLeaf {
        slot: 0,
        rows: root_rows,
        split: root_split,
    }];

    while pending.len() < config.max_leaves {
        // Largest statistic wins; on exact ties the lowest slot (created
        // earliest) is split first.
        let chosen = pending
            .iter()
            .enumerate()
            .filter(|(_, p)| p.split.is_some())
            .max_by(|(_, a), (_, b)| {
                let sa = a.split.as_ref().unwrap().statistic;
                let sb = b.split.as_ref().unwrap().statistic;
                sa.total_cmp(&sb).then(b.slot.cmp(&a.slot))
            })
            .map(|(idx, _)| idx);
        let Some(idx) = chosen else { break };
        let leaf = pending.swap_remove(idx);
        let split = leaf.split.expect("filtered on Some");

        let left_slot = nodes.len();
        let right_slot = nodes.len() + 1;
        nodes.push(None);
        nodes.push(None);
        nodes[leaf.slot] = Some(TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: left_slot,
            right: right_slot,
        });
        for (slot, rows) in [(left_slot, split.left_rows), (right_slot, split.right_rows)] {
            let child_split = best_split(features, outcomes, &rows, config)?;
            pending.push(PendingLeaf {
                slot,
                rows,
                split: child_split,
            });
        }
    }

    // Number leaves by ascending median survival; undefined medians sort
    // last, slot order breaks exact ties.
    let mut finals: Vec<(usize, Vec<usize>, Option<f64>)> = pending
        .into_iter()
        .map(|p| {
            let leaf_outcomes: Vec<SurvivalOutcome> =
                p.rows.iter().map(|&i| outcomes[i]).collect();
            let median = match kaplan_meier(&leaf_outcomes) {
                Ok(curve) => Ok(curve.median()),
                Err(Error::NoEvents) => Ok(None),
                Err(e) => Err(e),
            }?;
            Ok((p.slot, p.rows, median))
        })
        .collect::<Result<_>>()?;
    finals.sort_by(|a, b| {
        let ma = a.2.unwrap_or(f64::INFINITY);
        let mb = b.2.unwrap_or(f64::INFINITY);
        ma.total_cmp(&mb).then(a.0.cmp(&b.0))
    });

    let mut labels = vec![0usize; outcomes.len()];
    for (group0, (slot, rows, median)) in finals.iter().enumerate() {
        nodes[*slot] = Some(TreeNode::Leaf {
            group: group0 + 1,
            n_subjects: rows.len(),
            median: *median,
        });
        for &row in rows {
            labels[row] = group0 + 1;
        }
    }

    let tree = SurvivalTree {
        feature_names: features.names().to_vec(),
        nodes: nodes.into_iter().map(|n| n.expect("all slots filled")).collect(),
    };
    Ok(TreeFit { tree, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::stream_rng;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn exp_time(h: f64, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        -u.ln() / h
    }

    fn small_config() -> TreeConfig {
        TreeConfig {
            min_leaf: 15,
            ..TreeConfig::default()
        }
    }

    /// Two populations split perfectly by a binary feature.
    fn separable() -> (FeatureTable, Vec<SurvivalOutcome>) {
        let mut rng = stream_rng(100, 0);
        let mut marker = Vec::new();
        let mut noise = Vec::new();
        let mut outcomes = Vec::new();
        for i in 0..120 {
            let fast = i < 60;
            marker.push(if fast { 1.0 } else { 0.0 });
            noise.push(rng.gen_range(-1.0..1.0));
            let h = if fast { 0.2 } else { 0.01 };
            outcomes.push(SurvivalOutcome::new(exp_time(h, &mut rng), true));
        }
        let mut table = FeatureTable::with_rows(120);
        table.push_column("marker", marker).unwrap();
        table.push_column("noise", noise).unwrap();
        (table, outcomes)
    }

    #[test]
    fn perfectly_separable_data_splits_on_the_marker() {
        let (table, outcomes) = separable();
        let two_leaves = TreeConfig {
            max_leaves: 2,
            ..small_config()
        };
        let fit = fit_survival_tree(&table, &outcomes, &two_leaves).unwrap();
        assert_eq!(fit.tree.n_leaves(), 2);
        match &fit.tree.nodes[0] {
            TreeNode::Internal {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            other => panic!("expected internal root, got {other:?}"),
        }
        // Group 1 is the high-hazard population (shorter median).
        for (i, &label) in fit.labels.iter().enumerate() {
            assert_eq!(label, if i < 60 { 1 } else { 2 });
        }
    }

    #[test]
    fn assign_row_matches_training_labels() {
        let (table, outcomes) = separable();
        let fit = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();
        for i in 0..table.n_rows() {
            assert_eq!(fit.tree.assign_row(&table.row(i)).unwrap(), fit.labels[i]);
        }
        assert!(fit.tree.assign_row(&[1.0]).is_err());
    }

    #[test]
    fn leaf_medians_ascend_with_group_number() {
        let (table, outcomes) = separable();
        let fit = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();
        let mut medians: Vec<(usize, f64)> = fit
            .tree
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { group, median, .. } => Some((*group, median.unwrap())),
                _ => None,
            })
            .collect();
        medians.sort_by_key(|(g, _)| *g);
        assert!(medians.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn undefined_median_leaf_gets_the_last_group() {
        // One side all events, the other all censored: the censored leaf has
        // no median and must be numbered last (lowest risk).
        let mut rng = stream_rng(101, 0);
        let mut marker = Vec::new();
        let mut outcomes = Vec::new();
        for i in 0..100 {
            let event_side = i < 50;
            marker.push(if event_side { 1.0 } else { 0.0 });
            outcomes.push(if event_side {
                SurvivalOutcome::new(exp_time(0.1, &mut rng), true)
            } else {
                SurvivalOutcome::new(500.0, false)
            });
        }
        let mut table = FeatureTable::with_rows(100);
        table.push_column("marker", marker).unwrap();
        let fit = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();
        assert_eq!(fit.tree.n_leaves(), 2);
        let last = fit
            .tree
            .nodes
            .iter()
            .find_map(|n| match n {
                TreeNode::Leaf { group: 2, median, .. } => Some(*median),
                _ => None,
            })
            .expect("two leaves");
        assert_eq!(last, None);
        for i in 0..100 {
            assert_eq!(fit.labels[i], if i < 50 { 1 } else { 2 });
        }
    }

    #[test]
    fn max_leaves_caps_growth() {
        let mut rng = stream_rng(102, 0);
        let mut stage = Vec::new();
        let mut outcomes = Vec::new();
        for k in 0..4 {
            let h = 0.01 * 4.0_f64.powi(k as i32);
            for _ in 0..60 {
                stage.push(k as f64);
                outcomes.push(SurvivalOutcome::new(exp_time(h, &mut rng), true));
            }
        }
        let mut table = FeatureTable::with_rows(240);
        table.push_column("stage", stage).unwrap();
        let capped = TreeConfig {
            max_leaves: 2,
            ..small_config()
        };
        let fit = fit_survival_tree(&table, &outcomes, &capped).unwrap();
        assert_eq!(fit.tree.n_leaves(), 2);
        let full = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();
        assert!(full.tree.n_leaves() > 2);
        assert!(full.tree.n_leaves() <= 6);
        // Every leaf respects the minimum size.
        for node in &full.tree.nodes {
            if let TreeNode::Leaf { n_subjects, .. } = node {
                assert!(*n_subjects >= 15);
            }
        }
    }

    #[test]
    fn pure_noise_grows_no_split() {
        // A feature unrelated to outcome: no split reaches significance.
        let mut rng = stream_rng(103, 0);
        let noise: Vec<f64> = (0..90).map(|_| rng.gen_range(0.0..1.0)).collect();
        let outcomes: Vec<SurvivalOutcome> = (0..90)
            .map(|_| SurvivalOutcome::new(exp_time(0.05, &mut rng), true))
            .collect();
        let mut table = FeatureTable::with_rows(90);
        table.push_column("noise", noise).unwrap();
        let strict = TreeConfig {
            min_leaf: 30,
            split_alpha: 0.001,
            ..TreeConfig::default()
        };
        let fit = fit_survival_tree(&table, &outcomes, &strict).unwrap();
        assert_eq!(fit.tree.n_leaves(), 1);
        assert!(fit.labels.iter().all(|&l| l == 1));
        match &fit.tree.nodes[0] {
            TreeNode::Leaf { group, n_subjects, .. } => {
                assert_eq!(*group, 1);
                assert_eq!(*n_subjects, 90);
            }
            other => panic!("expected a single leaf, got {other:?}"),
        }
    }

    #[test]
    fn identical_outcomes_grow_no_split() {
        let outcomes = vec![SurvivalOutcome::new(10.0, true); 80];
        let values: Vec<f64> = (0..80).map(|i| i as f64).collect();
        let mut table = FeatureTable::with_rows(80);
        table.push_column("x", values).unwrap();
        let fit = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();
        assert_eq!(fit.tree.n_leaves(), 1);
    }

    #[test]
    fn row_order_does_not_change_the_tree() {
        let (table, outcomes) = separable();
        let fit = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();

        let mut perm: Vec<usize> = (0..outcomes.len()).collect();
        perm.shuffle(&mut stream_rng(104, 0));
        let shuffled_table = table.take_rows(&perm);
        let shuffled: Vec<SurvivalOutcome> = perm.iter().map(|&i| outcomes[i]).collect();
        let refit = fit_survival_tree(&shuffled_table, &shuffled, &small_config()).unwrap();

        assert_eq!(fit.tree.nodes.len(), refit.tree.nodes.len());
        for (a, b) in fit.tree.nodes.iter().zip(&refit.tree.nodes) {
            match (a, b) {
                (
                    TreeNode::Internal {
                        feature: fa,
                        threshold: ta,
                        ..
                    },
                    TreeNode::Internal {
                        feature: fb,
                        threshold: tb,
                        ..
                    },
                ) => {
                    assert_eq!(fa, fb);
                    assert_eq!(ta, tb);
                }
                (TreeNode::Leaf { group: ga, .. }, TreeNode::Leaf { group: gb, .. }) => {
                    assert_eq!(ga, gb);
                }
                _ => panic!("structures differ"),
            }
        }
        for (new_row, &old_row) in perm.iter().enumerate() {
            assert_eq!(refit.labels[new_row], fit.labels[old_row]);
        }
    }

    #[test]
    fn too_few_subjects_is_an_error() {
        let outcomes = vec![SurvivalOutcome::new(1.0, true); 20];
        let mut table = FeatureTable::with_rows(20);
        table
            .push_column("x", (0..20).map(|i| i as f64).collect())
            .unwrap();
        assert!(matches!(
            fit_survival_tree(&table, &outcomes, &TreeConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn render_describes_the_structure() {
        let (table, outcomes) = separable();
        let fit = fit_survival_tree(&table, &outcomes, &small_config()).unwrap();
        let text = fit.tree.render();
        assert!(text.contains("if marker <= 0.5:"));
        assert!(text.contains("group 1"));
        assert!(text.contains("group 2"));
        assert!(text.contains("else:"));
    }
}

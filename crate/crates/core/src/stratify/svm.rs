//! Linear-SVM group boundaries and the decision list built from them.
//!
//! Boundary k separates groups 1..=k from groups k+1..=n with a linear
//! hyperplane trained by Pegasos stochastic subgradient descent on
//! standardized features. The learned weights are folded back to the
//! original feature scale, so a boundary is a plain affine rule over raw
//! feature values. Assembled in order, the boundaries form a decision list:
//! a row belongs to the first group whose boundary places it on the low
//! side, and to the last group when none does.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{rank_auc, stream_rng};
use crate::table::FeatureTable;

/// Pegasos training settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmOptions {
    /// Soft-margin cost C; the Pegasos rate is lambda = 1 / (C * n).
    pub regularization: f64,
    /// Stochastic subgradient steps.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            regularization: 1.0,
            iterations: 100_000,
            seed: 0,
        }
    }
}

/// An affine boundary between the groups at or below `boundary_index` and
/// those above it. Positive decision values fall on the high-group side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHyperplane {
    pub boundary_index: usize,
    /// Weights over raw (unstandardized) feature values.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// AUROC of the decision value against "group above boundary" on the
    /// held-out rows, when test data was supplied and both sides occur.
    pub test_auroc: Option<f64>,
}

impl BoundaryHyperplane {
    /// Signed distance surrogate: negative or zero means the low-group side.
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.intercept
    }
}

/// Ordered boundary hyperplanes forming a first-match decision list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionList {
    pub boundaries: Vec<BoundaryHyperplane>,
}

impl DecisionList {
    pub fn n_groups(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Group of a feature row: the first boundary whose decision is at or
    /// below zero claims it, otherwise the highest group.
    pub fn assign_group(&self, row: &[f64]) -> Result<usize> {
        for b in &self.boundaries {
            if row.len() != b.weights.len() {
                return Err(Error::LengthMismatch {
                    context: "assign_group features",
                    left: row.len(),
                    right: b.weights.len(),
                });
            }
            if b.decision(row) <= 0.0 {
                return Ok(b.boundary_index);
            }
        }
        Ok(self.n_groups())
    }

    /// Human-readable rule chain over the named features.
    pub fn render(&self, feature_names: &[String]) -> String {
        let mut out = String::new();
        for (i, b) in self.boundaries.iter().enumerate() {
            let mut rule = String::new();
            for (w, name) in b.weights.iter().zip(feature_names) {
                if rule.is_empty() {
                    rule.push_str(&format!("{w} * {name}"));
                } else if *w < 0.0 {
                    rule.push_str(&format!(" - {} * {name}", -w));
                } else {
                    rule.push_str(&format!(" + {w} * {name}"));
                }
            }
            if b.intercept < 0.0 {
                rule.push_str(&format!(" - {}", -b.intercept));
            } else {
                rule.push_str(&format!(" + {}", b.intercept));
            }
            let prefix = if i == 0 { "if" } else { "else if" };
            out.push_str(&format!("{prefix} {rule} <= 0: group {}\n", b.boundary_index));
        }
        out.push_str(&format!("else: group {}\n", self.n_groups()));
        out
    }
}

/// Trains the boundary between groups <= k and groups > k.
///
/// Features are standardized (zero-variance columns pass through unscaled and
/// end up with zero weight), a regularized bias is learned as an extra
/// always-one input, and the result is folded back to raw feature scale.
/// When `test` rows are given, the boundary's held-out AUROC is attached.
pub fn fit_boundary_svm(
    features: &FeatureTable,
    labels: &[usize],
    k: usize,
    test: Option<(&FeatureTable, &[usize])>,
    options: &SvmOptions,
) -> Result<BoundaryHyperplane> {
    if features.n_rows() != labels.len() {
        return Err(Error::LengthMismatch {
            context: "fit_boundary_svm rows vs labels",
            left: features.n_rows(),
            right: labels.len(),
        });
    }
    if features.n_rows() == 0 || features.n_cols() == 0 {
        return Err(Error::EmptyInput("fit_boundary_svm features"));
    }
    if !(options.regularization > 0.0 && options.regularization.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "regularization must be positive, got {}",
            options.regularization
        )));
    }
    if options.iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be at least 1".into()));
    }
    let n = features.n_rows();
    let d = features.n_cols();
    let high = labels.iter().filter(|&&l| l > k).count();
    if high == 0 || high == n {
        return Err(Error::InvalidInput(format!(
            "boundary {k} needs groups on both sides, got {high} of {n} above"
        )));
    }

    // Standardize per column over the training rows.
    let mut means = vec![0.0; d];
    let mut scales = vec![1.0; d];
    for j in 0..d {
        let col = features.column_at(j);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("svm feature values"));
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        means[j] = mean;
        if var > 0.0 {
            scales[j] = var.sqrt();
        }
    }
    let standardized: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..d)
                .map(|j| (features.column_at(j)[i] - means[j]) / scales[j])
                .collect()
        })
        .collect();
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l > k { 1.0 } else { -1.0 })
        .collect();

    // Pegasos over the augmented input [x, 1]; the bias shares the
    // regularizer, which keeps every step a pure scale-and-add.
    let lambda = 1.0 / (options.regularization * n as f64);
    let mut w = vec![0.0; d + 1];
    let mut rng = stream_rng(options.seed, k as u64);
    for t in 1..=options.iterations {
        let i = rng.gen_range(0..n);
        let x = &standardized[i];
        let y = targets[i];
        let margin = y * (w[..d].iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + w[d]);
        let shrink = 1.0 - 1.0 / t as f64;
        for wj in w.iter_mut() {
            *wj *= shrink;
        }
        if margin < 1.0 {
            let eta = 1.0 / (lambda * t as f64);
            for (wj, xj) in w[..d].iter_mut().zip(x) {
                *wj += eta * y * xj;
            }
            w[d] += eta * y;
        }
    }

    if w[..d].iter().all(|&wj| wj == 0.0) {
        return Err(Error::InvalidInput(format!(
            "boundary {k} collapsed to a zero hyperplane"
        )));
    }

    // Fold the standardization into the weights so decisions read raw rows.
    let weights: Vec<f64> = (0..d).map(|j| w[j] / scales[j]).collect();
    let intercept = w[d]
        - (0..d)
            .map(|j| w[j] * means[j] / scales[j])
            .sum::<f64>();

    let test_auroc = test.and_then(|(table, test_labels)| {
        if table.n_rows() != test_labels.len() || table.n_cols() != d {
            return None;
        }
        let decisions: Vec<f64> = (0..table.n_rows())
            .map(|i| {
                weights
                    .iter()
                    .zip(table.row(i))
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + intercept
            })
            .collect();
        let positive: Vec<bool> = test_labels.iter().map(|&l| l > k).collect();
        rank_auc(&decisions, &positive)
    });

    Ok(BoundaryHyperplane {
        boundary_index: k,
        weights,
        intercept,
        test_auroc,
    })
}

/// Orders boundaries by index and checks they form a contiguous 1..=m chain
/// with consistent dimensionality.
pub fn assemble_decision_list(
    mut boundaries: Vec<BoundaryHyperplane>,
) -> Result<DecisionList> {
    if boundaries.is_empty() {
        return Err(Error::EmptyInput("assemble_decision_list boundaries"));
    }
    boundaries.sort_by_key(|b| b.boundary_index);
    for (i, b) in boundaries.iter().enumerate() {
        if b.boundary_index != i + 1 {
            return Err(Error::MissingBoundary(i + 1));
        }
        if b.weights.len() != boundaries[0].weights.len() {
            return Err(Error::LengthMismatch {
                context: "decision list boundary dimensions",
                left: b.weights.len(),
                right: boundaries[0].weights.len(),
            });
        }
    }
    Ok(DecisionList { boundaries })
}

//! Survival analysis toolkit built around four pieces:
//!
//! - classic estimators and tests ([`survival`]): Kaplan-Meier curves,
//!   Greenwood bands, log-rank tests with pairwise Bonferroni correction;
//! - Cox proportional hazards regression ([`cox`]) with Efron tie handling,
//!   an orthogonality-penalised composite loss, and p-value pruning;
//! - evaluation ([`metrics`]): Harrell's concordance index, AUROC at a time
//!   horizon, and percentile bootstrap intervals;
//! - model distillation ([`gp`]): a GP-GOMEA style search that compresses an
//!   opaque per-subject score into a short, printable expression over the
//!   input features, plus risk stratification utilities ([`stratify`]) that
//!   turn fitted risks into Bonferroni-validated prognostic groups with
//!   linear decision boundaries.
//!
//! The [`pipeline`] module chains everything behind a single config, and the
//! `survkit` binary exposes each step as a CLI subcommand. All randomised
//! steps draw from per-task seeded streams, so results are bit-reproducible
//! regardless of thread count.

pub mod cox;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod stratify;
pub mod survival;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use table::FeatureTable;

//! Symbolic distillation of numeric teacher features.
//!
//! Fixed-template expression trees over clinical variables are searched with
//! gene-pool optimal mixing under an interleaved multi-start schedule, then
//! rendered as human-readable equations. See [`distill_feature`] for the
//! per-depth, per-seed sweep and [`format_expr`] for printing.

mod expr;
mod format;
mod gomea;

pub use expr::{
    expr_mse, random_tree, slots_for_depth, BoundExpr, ExprTree, Op, Symbol, BOOLEAN_OPS,
    NUMERIC_OPS, PROTECTED_DIV_EPSILON,
};
pub use format::{format_expr, format_expr_precise, parse_expr, simplify};
pub use gomea::{
    build_linkage, distill_feature, gom_generation, run_ims, run_ims_counted, DistillResult,
    DistillTable, GpConfig, LinkageModel, RunStats,
};

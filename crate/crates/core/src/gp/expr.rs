//! Expression trees over a fixed max-arity-3 heap template.
//!
//! A tree of depth `d` owns `(3^(d+1) - 1) / 2` slots; node `k`'s children sit
//! at `3k + 1 .. 3k + 3`. Every slot holds a symbol, but only the slots
//! reachable from the root through operator arities are active: the rest are
//! inert genetic material that variation can freely rewrite. Booleans are
//! plain numbers (1.0 / 0.0, any non-zero is true), so evaluation is total,
//! and protected division keeps every result finite for finite inputs.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::FeatureTable;

/// Divisors smaller than this in magnitude are clamped (sign-preserving,
/// zero counts as positive) before dividing.
pub const PROTECTED_DIV_EPSILON: f64 = 1e-6;

/// Operator vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Ge,
    And,
    Or,
    Not,
    IfThenElse,
}

/// Numeric-valued operators, eligible wherever a number is expected.
pub const NUMERIC_OPS: [Op; 5] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::IfThenElse];

/// Boolean-valued operators, eligible in condition positions.
pub const BOOLEAN_OPS: [Op; 5] = [Op::Lt, Op::Ge, Op::And, Op::Or, Op::Not];

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Not => 1,
            Op::IfThenElse => 3,
            _ => 2,
        }
    }

    /// Whether the operator produces a 1.0/0.0 truth value.
    pub fn returns_bool(self) -> bool {
        matches!(self, Op::Lt | Op::Ge | Op::And | Op::Or | Op::Not)
    }

    /// Whether child `slot` is a condition (boolean-producing) position.
    pub fn wants_bool(self, slot: usize) -> bool {
        match self {
            Op::And | Op::Or | Op::Not => true,
            Op::IfThenElse => slot == 0,
            _ => false,
        }
    }
}

/// Applies an operator to already-evaluated child values. `args` must match
/// the operator's arity. Shared by tree evaluation and constant folding so
/// the two can never disagree.
pub(crate) fn apply_op(op: Op, args: &[f64]) -> f64 {
    debug_assert_eq!(args.len(), op.arity());
    match op {
        Op::Add => args[0] + args[1],
        Op::Sub => args[0] - args[1],
        Op::Mul => args[0] * args[1],
        Op::Div => {
            let d = args[1];
            let d = if d.abs() < PROTECTED_DIV_EPSILON {
                if d < 0.0 {
                    -PROTECTED_DIV_EPSILON
                } else {
                    PROTECTED_DIV_EPSILON
                }
            } else {
                d
            };
            args[0] / d
        }
        Op::Lt => f64::from(args[0] < args[1]),
        Op::Ge => f64::from(args[0] >= args[1]),
        Op::And => f64::from(args[0] != 0.0 && args[1] != 0.0),
        Op::Or => f64::from(args[0] != 0.0 || args[1] != 0.0),
        Op::Not => f64::from(args[0] == 0.0),
        Op::IfThenElse => {
            if args[0] != 0.0 {
                args[1]
            } else {
                args[2]
            }
        }
    }
}

/// One template slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol {
    Op(Op),
    /// Index into the tree's variable vocabulary.
    Var(u32),
    Const(f64),
}

/// Number of slots in a depth-`d` ternary heap template.
pub fn slots_for_depth(depth: u32) -> usize {
    (3usize.pow(depth + 1) - 1) / 2
}

/// First slot index of heap level `l`.
fn level_start(level: u32) -> usize {
    (3usize.pow(level) - 1) / 2
}

fn child_index(k: usize, j: usize) -> usize {
    3 * k + j + 1
}

/// A fixed-template expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    depth: u32,
    nodes: Vec<Symbol>,
    vars: Arc<Vec<String>>,
}

impl ExprTree {
    /// Builds a tree from raw parts, validating the slot count and that leaf
    /// slots hold terminals and variable indices are in range.
    pub fn from_parts(depth: u32, nodes: Vec<Symbol>, vars: Arc<Vec<String>>) -> Result<Self> {
        if nodes.len() != slots_for_depth(depth) {
            return Err(Error::InvalidInput(format!(
                "expression template of depth {depth} needs {} slots, got {}",
                slots_for_depth(depth),
                nodes.len()
            )));
        }
        let leaf_start = level_start(depth);
        for (k, sym) in nodes.iter().enumerate() {
            match sym {
                Symbol::Op(_) if k >= leaf_start => {
                    return Err(Error::InvalidInput(format!(
                        "operator in leaf slot {k} of depth-{depth} template"
                    )));
                }
                Symbol::Var(i) if *i as usize >= vars.len() => {
                    return Err(Error::InvalidInput(format!(
                        "variable index {i} out of range (vocabulary size {})",
                        vars.len()
                    )));
                }
                Symbol::Const(c) if !c.is_finite() => {
                    return Err(Error::InvalidInput("non-finite constant in tree".into()));
                }
                _ => {}
            }
        }
        Ok(Self { depth, nodes, vars })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Variable vocabulary this tree's `Var` indices point into.
    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub(crate) fn vars_arc(&self) -> &Arc<Vec<String>> {
        &self.vars
    }

    pub(crate) fn nodes(&self) -> &[Symbol] {
        &self.nodes
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [Symbol] {
        &mut self.nodes
    }

    /// Slots reachable from the root through operator arities.
    pub fn active_slots(&self) -> Vec<usize> {
        let mut active = Vec::new();
        let mut stack = vec![0usize];
        while let Some(k) = stack.pop() {
            active.push(k);
            if let Symbol::Op(op) = self.nodes[k] {
                for j in 0..op.arity() {
                    stack.push(child_index(k, j));
                }
            }
        }
        active
    }

    /// Names of the variables the active part of the tree references.
    pub fn used_variables(&self) -> Vec<String> {
        let mut seen = vec![false; self.vars.len()];
        for k in self.active_slots() {
            if let Symbol::Var(i) = self.nodes[k] {
                seen[i as usize] = true;
            }
        }
        self.vars
            .iter()
            .zip(&seen)
            .filter(|(_, s)| **s)
            .map(|(v, _)| v.clone())
            .collect()
    }

    pub(crate) fn eval_slot(&self, k: usize, resolve: &mut dyn FnMut(u32) -> f64) -> f64 {
        match self.nodes[k] {
            Symbol::Const(c) => c,
            Symbol::Var(i) => resolve(i),
            Symbol::Op(op) => match op {
                // If-then-else short-circuits; everything else evaluates all
                // children. Results match apply_op because the semantics are
                // value-only.
                Op::IfThenElse => {
                    if self.eval_slot(child_index(k, 0), resolve) != 0.0 {
                        self.eval_slot(child_index(k, 1), resolve)
                    } else {
                        self.eval_slot(child_index(k, 2), resolve)
                    }
                }
                Op::Not => {
                    let a = self.eval_slot(child_index(k, 0), resolve);
                    apply_op(op, &[a])
                }
                _ => {
                    let a = self.eval_slot(child_index(k, 0), resolve);
                    let b = self.eval_slot(child_index(k, 1), resolve);
                    apply_op(op, &[a, b])
                }
            },
        }
    }

    /// Evaluates the tree on a named row. Fails if an active slot references
    /// a variable missing from the row.
    pub fn eval(&self, row: &HashMap<String, f64>) -> Result<f64> {
        let mut resolved = vec![None; self.vars.len()];
        for k in self.active_slots() {
            if let Symbol::Var(i) = self.nodes[k] {
                let name = &self.vars[i as usize];
                match row.get(name) {
                    Some(v) => resolved[i as usize] = Some(*v),
                    None => return Err(Error::UnknownVariable(name.clone())),
                }
            }
        }
        Ok(self.eval_slot(0, &mut |i| resolved[i as usize].unwrap_or(0.0)))
    }

    /// Binds the tree's used variables to table columns for bulk evaluation.
    pub fn bind<'a>(&'a self, table: &'a FeatureTable) -> Result<BoundExpr<'a>> {
        let mut cols: Vec<Option<&[f64]>> = vec![None; self.vars.len()];
        for k in self.active_slots() {
            if let Symbol::Var(i) = self.nodes[k] {
                let name = &self.vars[i as usize];
                match table.column(name) {
                    Some(c) => cols[i as usize] = Some(c),
                    None => return Err(Error::UnknownVariable(name.clone())),
                }
            }
        }
        Ok(BoundExpr { tree: self, cols })
    }
}

/// An [`ExprTree`] bound to the columns of a table.
pub struct BoundExpr<'a> {
    tree: &'a ExprTree,
    cols: Vec<Option<&'a [f64]>>,
}

impl BoundExpr<'_> {
    pub fn eval_row(&self, row: usize) -> f64 {
        self.tree
            .eval_slot(0, &mut |i| match self.cols[i as usize] {
                Some(c) => c[row],
                None => 0.0,
            })
    }
}

/// Mean squared error of the tree's output against `target` over the rows of
/// `data`.
pub fn expr_mse(tree: &ExprTree, data: &FeatureTable, target: &[f64]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::EmptyInput("expr_mse target"));
    }
    if data.n_rows() != target.len() {
        return Err(Error::LengthMismatch {
            context: "expr_mse data vs target",
            left: data.n_rows(),
            right: target.len(),
        });
    }
    let bound = tree.bind(data)?;
    let mut sum = 0.0;
    for (i, y) in target.iter().enumerate() {
        let e = bound.eval_row(i) - y;
        sum += e * e;
    }
    Ok(sum / target.len() as f64)
}

// ── Random initialization ─────────────────────────────────────────────────

fn random_terminal(
    want_bool: bool,
    vars: &Arc<Vec<String>>,
    const_range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Symbol {
    let use_var = !vars.is_empty() && rng.gen_bool(0.5);
    if use_var {
        Symbol::Var(rng.gen_range(0..vars.len()) as u32)
    } else if want_bool {
        Symbol::Const(f64::from(rng.gen_bool(0.5)))
    } else {
        Symbol::Const(rng.gen_range(const_range.0..=const_range.1))
    }
}

/// Samples a full template of the given depth. Condition positions receive
/// boolean-producing operators (or 0/1 terminals at the leaves); inert slots
/// are filled the same way numeric slots are, so they carry plausible donor
/// material.
pub fn random_tree(
    depth: u32,
    vars: &Arc<Vec<String>>,
    const_range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> ExprTree {
    let n = slots_for_depth(depth);
    let mut nodes = vec![Symbol::Const(0.0); n];
    let leaf_start = level_start(depth);
    // Queue of (slot, wants_bool); starts from the numeric root and walks the
    // whole template so every slot is populated.
    let mut queue: Vec<(usize, bool)> = vec![(0, false)];
    let mut visited = vec![false; n];
    while let Some((k, want_bool)) = queue.pop() {
        visited[k] = true;
        let is_leaf = k >= leaf_start;
        let symbol = if !is_leaf && rng.gen_bool(0.6) {
            let pool = if want_bool { &BOOLEAN_OPS } else { &NUMERIC_OPS };
            Symbol::Op(pool[rng.gen_range(0..pool.len())])
        } else {
            random_terminal(want_bool, vars, const_range, rng)
        };
        nodes[k] = symbol;
        if !is_leaf {
            let wants: [bool; 3] = match symbol {
                Symbol::Op(op) => [op.wants_bool(0), op.wants_bool(1), op.wants_bool(2)],
                _ => [false; 3],
            };
            for j in 0..3 {
                queue.push((child_index(k, j), wants[j]));
            }
        }
    }
    debug_assert!(visited.iter().all(|v| *v));
    ExprTree {
        depth,
        nodes,
        vars: Arc::clone(vars),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::stream_rng;

    fn vars(names: &[&str]) -> Arc<Vec<String>> {
        Arc::new(names.iter().map(|s| s.to_string()).collect())
    }

    /// Depth-1 tree `op(a, b)` over variables x, y.
    fn binary(op: Op) -> ExprTree {
        ExprTree::from_parts(
            1,
            vec![
                Symbol::Op(op),
                Symbol::Var(0),
                Symbol::Var(1),
                Symbol::Const(0.0),
            ],
            vars(&["x", "y"]),
        )
        .unwrap()
    }

    fn row(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn protected_division_semantics() {
        let div = binary(Op::Div);
        // Tiny denominator clamps to 1e-6.
        assert_eq!(div.eval(&row(&[("x", 1.0), ("y", 1e-8)])).unwrap(), 1e6);
        // Zero denominator counts as positive.
        assert_eq!(div.eval(&row(&[("x", 3.0), ("y", 0.0)])).unwrap(), 3e6);
        // Negative tiny denominator keeps its sign.
        assert_eq!(div.eval(&row(&[("x", 1.0), ("y", -1e-9)])).unwrap(), -1e6);
        // Ordinary division untouched.
        assert_eq!(div.eval(&row(&[("x", 6.0), ("y", 3.0)])).unwrap(), 2.0);
    }

    #[test]
    fn boolean_encoding_and_ite() {
        let lt = binary(Op::Lt);
        assert_eq!(lt.eval(&row(&[("x", 2.0), ("y", 3.0)])).unwrap(), 1.0);
        assert_eq!(lt.eval(&row(&[("x", 3.0), ("y", 3.0)])).unwrap(), 0.0);
        let ge = binary(Op::Ge);
        assert_eq!(ge.eval(&row(&[("x", 3.0), ("y", 3.0)])).unwrap(), 1.0);

        // If(x) Then(y) Else(7): condition is any non-zero value.
        let ite = ExprTree::from_parts(
            1,
            vec![
                Symbol::Op(Op::IfThenElse),
                Symbol::Var(0),
                Symbol::Var(1),
                Symbol::Const(7.0),
            ],
            vars(&["x", "y"]),
        )
        .unwrap();
        assert_eq!(ite.eval(&row(&[("x", 0.0), ("y", 5.0)])).unwrap(), 7.0);
        assert_eq!(ite.eval(&row(&[("x", -2.0), ("y", 5.0)])).unwrap(), 5.0);
    }

    #[test]
    fn unknown_variable_is_named() {
        let add = binary(Op::Add);
        match add.eval(&row(&[("x", 1.0)])) {
            Err(Error::UnknownVariable(name)) => assert_eq!(name, "y"),
            other => panic!("expected UnknownVariable, got {other:?}"),
        }
    }

    #[test]
    fn inert_slots_do_not_need_variables() {
        // Root is a constant: the whole template below it is inert, so a var
        // sitting in an inert slot must not require a binding.
        let tree = ExprTree::from_parts(
            1,
            vec![
                Symbol::Const(4.0),
                Symbol::Var(0),
                Symbol::Var(1),
                Symbol::Var(1),
            ],
            vars(&["x", "y"]),
        )
        .unwrap();
        assert_eq!(tree.eval(&row(&[])).unwrap(), 4.0);
        assert_eq!(tree.used_variables(), Vec::<String>::new());
    }

    #[test]
    fn template_validation() {
        // Wrong slot count.
        assert!(ExprTree::from_parts(1, vec![Symbol::Const(1.0)], vars(&[])).is_err());
        // Operator in a leaf slot.
        assert!(ExprTree::from_parts(
            1,
            vec![
                Symbol::Op(Op::Add),
                Symbol::Op(Op::Add),
                Symbol::Const(1.0),
                Symbol::Const(1.0),
            ],
            vars(&[]),
        )
        .is_err());
        // Variable index out of range.
        assert!(ExprTree::from_parts(0, vec![Symbol::Var(0)], vars(&[])).is_err());
    }

    #[test]
    fn expr_mse_examples() {
        let data = FeatureTable::new(
            vec!["x".into(), "y".into()],
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        )
        .unwrap();
        let add = binary(Op::Add);
        // Exact target: zero error.
        assert_eq!(expr_mse(&add, &data, &[4.0, 6.0]).unwrap(), 0.0);
        // Constant tree c against targets {c, c + 2}: MSE = 2.
        let c = ExprTree::from_parts(0, vec![Symbol::Const(5.0)], vars(&[])).unwrap();
        assert_eq!(expr_mse(&c, &data, &[5.0, 7.0]).unwrap(), 2.0);
        // Length mismatch.
        assert!(expr_mse(&add, &data, &[1.0]).is_err());
    }

    #[test]
    fn random_trees_evaluate_finite_on_large_inputs() {
        let names = vars(&["a", "b", "c"]);
        let mut rng = stream_rng(13, 0);
        for depth in [2u32, 3, 4] {
            for i in 0..200 {
                let tree = random_tree(depth, &names, (-10.0, 10.0), &mut rng);
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let r = row(&[
                    ("a", sign * 1e6),
                    ("b", -987_654.0),
                    ("c", 1e6 * ((i as f64) / 200.0 - 0.5)),
                ]);
                let v = tree.eval(&r).unwrap();
                assert!(v.is_finite(), "non-finite eval of {tree:?}");
            }
        }
    }

    #[test]
    fn random_trees_respect_structural_typing() {
        // Condition children of if-then-else are boolean-producing operators
        // or terminals, never arithmetic operators.
        let names = vars(&["a", "b"]);
        let mut rng = stream_rng(5, 1);
        for _ in 0..300 {
            let tree = random_tree(3, &names, (-10.0, 10.0), &mut rng);
            for &k in &tree.active_slots() {
                if let Symbol::Op(op) = tree.nodes()[k] {
                    for j in 0..op.arity() {
                        if op.wants_bool(j) {
                            let child = tree.nodes()[child_index(k, j)];
                            match child {
                                Symbol::Op(c) => assert!(c.returns_bool(), "{c:?} in condition"),
                                Symbol::Const(c) => assert!(c == 0.0 || c == 1.0),
                                Symbol::Var(_) => {}
                            }
                        }
                    }
                }
            }
        }
    }
}

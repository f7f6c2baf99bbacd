//! Gene-pool optimal mixing search over template trees, with an interleaved
//! multi-start schedule.
//!
//! Variation copies node symbols position-wise from donors, one linkage
//! group at a time, keeping a change only when fitness does not worsen, so
//! the best training fitness in a population never increases. The schedule
//! interleaves populations of doubling size: a new population enters after
//! every 4 generations of its predecessor, and the configured generation
//! budget counts generations across all populations.
//!
//! Search fitness is the mean squared error after a closed-form affine
//! calibration of the tree's output against the target. The calibration is
//! folded into the returned expression, so reported errors are plain MSE of
//! the final tree and are exactly recomputable from it.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::expr::{expr_mse, random_tree, slots_for_depth, ExprTree, Symbol};
use crate::gp::format::{extract_node, node_to_tree, reduce_node, Node};
use crate::gp::Op;
use crate::stats::{mix_seed, stream_rng};
use crate::table::FeatureTable;

/// How node positions are grouped for optimal mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkageModel {
    /// Every template position is its own group.
    Univariate,
    /// A random merge hierarchy over positions: all singletons plus every
    /// intermediate merged subset (the full set is excluded).
    RandomTree,
}

/// Search configuration for one distillation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Template depth, one of 2, 3, 4.
    pub depth: u32,
    /// Total generation budget across all interleaved populations.
    pub generations: usize,
    /// Size of the first population; population k holds base * 2^k members.
    pub base_population: usize,
    /// Independent restarts per depth in [`distill_feature`].
    pub seeds: u32,
    pub linkage: LinkageModel,
    /// Ephemeral constant range; defaults to [-10, 10] widened to cover the
    /// observed target range.
    pub constant_range: Option<(f64, f64)>,
    pub rng_seed: u64,
    /// Optional early exit: stop once best training fitness reaches this.
    pub stop_fitness: Option<f64>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            generations: 512,
            base_population: 64,
            seeds: 5,
            linkage: LinkageModel::Univariate,
            constant_range: None,
            rng_seed: 0,
            stop_fitness: None,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.depth) {
            return Err(Error::InvalidConfig(format!(
                "template depth must be 2, 3, or 4, got {}",
                self.depth
            )));
        }
        if self.base_population < 2 {
            return Err(Error::InvalidConfig(format!(
                "base population must be at least 2, got {}",
                self.base_population
            )));
        }
        if self.generations == 0 {
            return Err(Error::BudgetTooSmall(
                "generation budget is zero; the first generation can never complete".into(),
            ));
        }
        if let Some((lo, hi)) = self.constant_range {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidConfig(format!(
                    "constant range [{lo}, {hi}] is not a proper interval"
                )));
            }
        }
        Ok(())
    }
}

/// Search accounting for one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    /// Exact number of fitness evaluations performed.
    pub evaluations: u64,
    /// Generations actually run (equals the budget unless stopped early).
    pub generations_run: usize,
    pub population_sizes: Vec<usize>,
    pub population_generations: Vec<usize>,
}

/// Outcome of one distillation run.
#[derive(Debug, Clone)]
pub struct DistillResult {
    pub expression: ExprTree,
    pub train_mse: f64,
    pub test_mse: f64,
    pub depth: u32,
    /// Seed identifier: the seed index within a distillation sweep, or the
    /// raw rng seed for a standalone run.
    pub seed: u64,
    pub stats: RunStats,
}

/// All runs of a distillation sweep plus the per-depth selections.
#[derive(Debug, Clone)]
pub struct DistillTable {
    /// Every (depth, seed) run in sweep order.
    pub runs: Vec<DistillResult>,
    /// Per depth (input order), the run with the lowest test MSE; ties break
    /// toward the lower seed index.
    pub best_per_depth: Vec<DistillResult>,
}

/// Builds mixing groups over `n_slots` template positions.
pub fn build_linkage(
    model: LinkageModel,
    n_slots: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let singletons: Vec<Vec<usize>> = (0..n_slots).map(|s| vec![s]).collect();
    match model {
        LinkageModel::Univariate => singletons,
        LinkageModel::RandomTree => {
            let mut groups = singletons.clone();
            let mut active = singletons;
            while active.len() > 1 {
                let a = active.swap_remove(rng.gen_range(0..active.len()));
                let b = active.swap_remove(rng.gen_range(0..active.len()));
                let mut merged = a;
                merged.extend(b);
                merged.sort_unstable();
                if merged.len() < n_slots {
                    groups.push(merged.clone());
                }
                active.push(merged);
            }
            groups
        }
    }
}

/// One optimal-mixing pass over every member. Returns the number of fitness
/// evaluations performed. Members carry their current fitness; donors are a
/// snapshot of the population at entry.
fn gom_pass(
    members: &mut [(ExprTree, f64)],
    groups: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
    fitness: &mut dyn FnMut(&ExprTree) -> f64,
) -> u64 {
    let donors: Vec<ExprTree> = members.iter().map(|(t, _)| t.clone()).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut attempts = 0u64;
    for i in 0..members.len() {
        order.shuffle(rng);
        for &g in &order {
            let donor = &donors[rng.gen_range(0..donors.len())];
            let group = &groups[g];
            let differs = group
                .iter()
                .any(|&s| donor.nodes()[s] != members[i].0.nodes()[s]);
            if !differs {
                continue;
            }
            let backup: Vec<Symbol> = group.iter().map(|&s| members[i].0.nodes()[s]).collect();
            for &s in group {
                members[i].0.nodes_mut()[s] = donor.nodes()[s];
            }
            attempts += 1;
            let f = fitness(&members[i].0);
            if f <= members[i].1 {
                members[i].1 = f;
            } else {
                for (&s, &sym) in group.iter().zip(&backup) {
                    members[i].0.nodes_mut()[s] = sym;
                }
            }
        }
    }
    attempts
}

/// One public mixing generation under plain MSE fitness. The population must
/// share one template (same depth and vocabulary); linkage groups index
/// template positions.
pub fn gom_generation(
    population: &[ExprTree],
    linkage: &[Vec<usize>],
    data: &FeatureTable,
    target: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ExprTree>> {
    let first = population
        .first()
        .ok_or(Error::EmptyInput("gom_generation population"))?;
    let n_slots = slots_for_depth(first.depth());
    for t in population {
        if t.depth() != first.depth() || t.variables() != first.variables() {
            return Err(Error::InvalidInput(
                "population members must share one template depth and vocabulary".into(),
            ));
        }
    }
    for g in linkage {
        if g.is_empty() {
            return Err(Error::InvalidInput("empty linkage group".into()));
        }
        if let Some(&bad) = g.iter().find(|&&s| s >= n_slots) {
            return Err(Error::InvalidInput(format!(
                "linkage position {bad} outside the {n_slots}-slot template"
            )));
        }
    }
    if target.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("gom_generation target"));
    }
    let mut members: Vec<(ExprTree, f64)> = population
        .iter()
        .map(|t| Ok((t.clone(), expr_mse(t, data, target)?)))
        .collect::<Result<_>>()?;
    let mut fit = |t: &ExprTree| expr_mse(t, data, target).expect("inputs validated above");
    gom_pass(&mut members, linkage, rng, &mut fit);
    Ok(members.into_iter().map(|(t, _)| t).collect())
}

/// Affine-calibrated mean squared error: the `(mse, a, b)` minimizing
/// `mean((target - (a + b * output))^2)` in closed form. Degenerate outputs
/// (zero or non-finite variance) fall back to the constant model `a = mean
/// target, b = 0`.
fn scaled_mse(outputs: &[f64], target: &[f64]) -> (f64, f64, f64) {
    let n = target.len() as f64;
    let mean_o = outputs.iter().sum::<f64>() / n;
    let mean_y = target.iter().sum::<f64>() / n;
    let mut var_o = 0.0;
    let mut cov = 0.0;
    for (o, y) in outputs.iter().zip(target) {
        var_o += (o - mean_o) * (o - mean_o);
        cov += (o - mean_o) * (y - mean_y);
    }
    var_o /= n;
    cov /= n;
    let (a, b) = if var_o > 0.0 && var_o.is_finite() && cov.is_finite() {
        let b = cov / var_o;
        (mean_y - b * mean_o, b)
    } else {
        (mean_y, 0.0)
    };
    let mut sse = 0.0;
    for (o, y) in outputs.iter().zip(target) {
        let e = y - (a + b * o);
        sse += e * e;
    }
    let mse = sse / n;
    if mse.is_finite() {
        (mse, a, b)
    } else {
        // Calibration overflowed (astronomical outputs): score as the
        // constant model so the candidate is comparable but unattractive.
        let mut sse = 0.0;
        for y in target {
            let e = y - mean_y;
            sse += e * e;
        }
        (sse / n, mean_y, 0.0)
    }
}

struct Population {
    members: Vec<(ExprTree, f64)>,
    generations: usize,
}

struct Ims<'a> {
    config: &'a GpConfig,
    vars: Arc<Vec<String>>,
    cols: Vec<&'a [f64]>,
    target: &'a [f64],
    const_range: (f64, f64),
    n_slots: usize,
    rng: ChaCha8Rng,
    pops: Vec<Population>,
    elite: Option<(ExprTree, f64)>,
    budget: usize,
    evaluations: u64,
    outputs: Vec<f64>,
    counter: Option<&'a AtomicU64>,
    done: bool,
}

fn fill_outputs(cols: &[&[f64]], tree: &ExprTree, n_rows: usize, out: &mut Vec<f64>) {
    out.clear();
    for r in 0..n_rows {
        out.push(tree.eval_slot(0, &mut |i| cols[i as usize][r]));
    }
}

impl Ims<'_> {
    fn fitness(&mut self, tree: &ExprTree) -> f64 {
        if let Some(c) = self.counter {
            c.fetch_add(1, Ordering::Relaxed);
        }
        fill_outputs(&self.cols, tree, self.target.len(), &mut self.outputs);
        scaled_mse(&self.outputs, self.target).0
    }

    fn note_best(&mut self, tree: &ExprTree, f: f64) {
        if self.elite.as_ref().is_none_or(|(_, ef)| f < *ef) {
            self.elite = Some((tree.clone(), f));
        }
        if let Some(s) = self.config.stop_fitness {
            if f <= s {
                self.done = true;
            }
        }
    }

    fn spawn(&mut self, level: usize) {
        let size = self.config.base_population << level;
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            let tree = random_tree(self.config.depth, &self.vars, self.const_range, &mut self.rng);
            self.evaluations += 1;
            let f = self.fitness(&tree);
            self.note_best(&tree, f);
            members.push((tree, f));
        }
        self.pops.push(Population {
            members,
            generations: 0,
        });
    }

    /// Runs one generation of population `level` (spawning it first if it
    /// does not exist yet), then cascades to the next population after every
    /// 4th generation.
    fn advance(&mut self, level: usize) {
        if self.budget == 0 || self.done {
            return;
        }
        if level == self.pops.len() {
            self.spawn(level);
            if self.done {
                return;
            }
        }
        let groups = build_linkage(self.config.linkage, self.n_slots, &mut self.rng);
        let mut members = std::mem::take(&mut self.pops[level].members);
        let mut rng = self.rng.clone();
        let attempts = gom_pass(&mut members, &groups, &mut rng, &mut |t| self.fitness(t));
        self.rng = rng;
        let best = members
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(t, f)| (t.clone(), *f))
            .expect("populations are never empty");
        self.pops[level].members = members;
        self.pops[level].generations += 1;
        self.budget -= 1;
        self.evaluations += attempts;
        self.note_best(&best.0, best.1);
        if self.done {
            return;
        }
        if self.pops[level].generations % 4 == 0 {
            self.advance(level + 1);
        }
    }
}

fn validate_run_inputs(
    data: &FeatureTable,
    target: &[f64],
    test_data: &FeatureTable,
    test_target: &[f64],
) -> Result<()> {
    if target.is_empty() {
        return Err(Error::EmptyInput("distillation target"));
    }
    if data.n_rows() != target.len() {
        return Err(Error::LengthMismatch {
            context: "distillation data vs target",
            left: data.n_rows(),
            right: target.len(),
        });
    }
    if test_target.is_empty() {
        return Err(Error::EmptyInput("distillation test target"));
    }
    if test_data.n_rows() != test_target.len() {
        return Err(Error::LengthMismatch {
            context: "distillation test data vs test target",
            left: test_data.n_rows(),
            right: test_target.len(),
        });
    }
    if data.names() != test_data.names() {
        return Err(Error::InvalidInput(
            "train and test tables must carry the same columns".into(),
        ));
    }
    if target.iter().chain(test_target).any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("distillation target"));
    }
    Ok(())
}

fn run_ims_inner(
    config: &GpConfig,
    data: &FeatureTable,
    target: &[f64],
    test_data: &FeatureTable,
    test_target: &[f64],
    counter: Option<&AtomicU64>,
) -> Result<DistillResult> {
    config.validate()?;
    validate_run_inputs(data, target, test_data, test_target)?;

    let const_range = config.constant_range.unwrap_or_else(|| {
        let lo = target.iter().fold(-10.0_f64, |m, y| m.min(*y));
        let hi = target.iter().fold(10.0_f64, |m, y| m.max(*y));
        (lo, hi)
    });
    let vars = Arc::new(data.names().to_vec());
    let cols: Vec<&[f64]> = (0..vars.len()).map(|i| data.column_at(i)).collect();

    let mut ims = Ims {
        config,
        vars: Arc::clone(&vars),
        cols,
        target,
        const_range,
        n_slots: slots_for_depth(config.depth),
        rng: stream_rng(config.rng_seed, 0),
        pops: Vec::new(),
        elite: None,
        budget: config.generations,
        evaluations: 0,
        outputs: Vec::new(),
        counter,
        done: false,
    };
    while ims.budget > 0 && !ims.done {
        ims.advance(0);
    }

    let (tree, _) = ims.elite.take().expect("at least one population spawned");
    // Fold the affine calibration into the returned expression so its plain
    // MSE matches the search fitness and is recomputable from the tree.
    let mut outputs = std::mem::take(&mut ims.outputs);
    fill_outputs(&ims.cols, &tree, target.len(), &mut outputs);
    let (_, a, b) = scaled_mse(&outputs, target);
    let folded = reduce_node(Node::Op(
        Op::Add,
        vec![
            Node::Op(Op::Mul, vec![Node::Const(b), extract_node(&tree)]),
            Node::Const(a),
        ],
    ));
    let expression = node_to_tree(&folded, Some(&vars))?;
    let train_mse = expr_mse(&expression, data, target)?;
    let test_mse = expr_mse(&expression, test_data, test_target)?;

    Ok(DistillResult {
        expression,
        train_mse,
        test_mse,
        depth: config.depth,
        seed: config.rng_seed,
        stats: RunStats {
            evaluations: ims.evaluations,
            generations_run: config.generations - ims.budget,
            population_sizes: ims.pops.iter().map(|p| p.members.len()).collect(),
            population_generations: ims.pops.iter().map(|p| p.generations).collect(),
        },
    })
}

/// Runs one interleaved multi-start search and returns the best expression by
/// training fitness, with its test MSE recorded.
pub fn run_ims(
    config: &GpConfig,
    data: &FeatureTable,
    target: &[f64],
    test_data: &FeatureTable,
    test_target: &[f64],
) -> Result<DistillResult> {
    run_ims_inner(config, data, target, test_data, test_target, None)
}

/// [`run_ims`] with an external evaluation counter: `counter` is incremented
/// on every fitness call, independently of the engine's own accounting, so
/// the two can be cross-checked.
pub fn run_ims_counted(
    config: &GpConfig,
    data: &FeatureTable,
    target: &[f64],
    test_data: &FeatureTable,
    test_target: &[f64],
    counter: &AtomicU64,
) -> Result<DistillResult> {
    run_ims_inner(config, data, target, test_data, test_target, Some(counter))
}

/// Runs `config.seeds` independent searches per depth and selects, per depth,
/// the run with the lowest test MSE. Runs execute in parallel but are reduced
/// in deterministic sweep order, and each run owns a private RNG stream
/// derived from (rng_seed, depth, seed index).
pub fn distill_feature(
    data: &FeatureTable,
    target: &[f64],
    test_data: &FeatureTable,
    test_target: &[f64],
    depths: &[u32],
    config: &GpConfig,
) -> Result<DistillTable> {
    if depths.is_empty() {
        return Err(Error::InvalidConfig("no template depths requested".into()));
    }
    if config.seeds == 0 {
        return Err(Error::InvalidConfig("seed count must be at least 1".into()));
    }
    let jobs: Vec<(u32, u32)> = depths
        .iter()
        .flat_map(|&d| (0..config.seeds).map(move |s| (d, s)))
        .collect();
    let runs: Vec<DistillResult> = jobs
        .par_iter()
        .map(|&(depth, seed_index)| {
            let run_config = GpConfig {
                depth,
                rng_seed: mix_seed(&[config.rng_seed, u64::from(depth), u64::from(seed_index)]),
                ..config.clone()
            };
            let mut result =
                run_ims(&run_config, data, target, test_data, test_target)?;
            result.seed = u64::from(seed_index);
            Ok(result)
        })
        .collect::<Result<_>>()?;

    let best_per_depth = depths
        .iter()
        .map(|&d| {
            runs.iter()
                .filter(|r| r.depth == d)
                .min_by(|a, b| a.test_mse.total_cmp(&b.test_mse))
                .expect("at least one seed per depth")
                .clone()
        })
        .collect();
    Ok(DistillTable {
        runs,
        best_per_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::format::{format_expr, format_expr_precise, parse_expr};

    /// Deterministic feature table with `n` rows of the named columns, each
    /// filled uniformly from the given range.
    fn uniform_table(names: &[&str], n: usize, range: (f64, f64), seed: u64) -> FeatureTable {
        let mut rng = stream_rng(seed, 17);
        let columns = names
            .iter()
            .map(|_| (0..n).map(|_| rng.gen_range(range.0..range.1)).collect())
            .collect();
        FeatureTable::new(names.iter().map(|s| s.to_string()).collect(), columns).unwrap()
    }

    fn target_of(expr: &str, data: &FeatureTable) -> Vec<f64> {
        let tree = parse_expr(expr).unwrap();
        let bound = tree.bind(data).unwrap();
        (0..data.n_rows()).map(|i| bound.eval_row(i)).collect()
    }

    fn retemplate(expr: &str, depth: u32, vocab: &Arc<Vec<String>>) -> ExprTree {
        // Parse, then re-embed into a template of the requested depth with
        // the shared vocabulary so population members are mixable.
        let parsed = parse_expr(expr).unwrap();
        let node = extract_node(&parsed);
        let inner = node_to_tree(&node, Some(vocab)).unwrap();
        let mut nodes = vec![Symbol::Const(0.0); slots_for_depth(depth)];
        place_at_root(&inner, &mut nodes);
        ExprTree::from_parts(depth, nodes, Arc::clone(vocab)).unwrap()
    }

    fn place_at_root(inner: &ExprTree, nodes: &mut [Symbol]) {
        fn copy(inner: &ExprTree, from: usize, nodes: &mut [Symbol], to: usize) {
            nodes[to] = inner.nodes()[from];
            if let Symbol::Op(op) = inner.nodes()[from] {
                for j in 0..op.arity() {
                    copy(inner, 3 * from + j + 1, nodes, 3 * to + j + 1);
                }
            }
        }
        copy(inner, 0, nodes, 0);
    }

    #[test]
    fn identical_population_is_a_fixed_point() {
        let data = uniform_table(&["x", "y"], 40, (-2.0, 2.0), 3);
        let target = target_of("x * y", &data);
        let vocab = Arc::new(vec!["x".to_string(), "y".to_string()]);
        let tree = retemplate("x + 1", 2, &vocab);
        let population = vec![tree; 6];
        let mut rng = stream_rng(1, 0);
        let linkage = build_linkage(LinkageModel::Univariate, slots_for_depth(2), &mut rng);
        let out = gom_generation(&population, &linkage, &data, &target, &mut rng).unwrap();
        assert_eq!(out.len(), 6);
        for t in &out {
            assert_eq!(t, &population[0]);
        }
    }

    #[test]
    fn best_mse_never_worsens_across_generations() {
        let data = uniform_table(&["x", "y"], 50, (-2.0, 2.0), 11);
        let target = target_of("x * y + 0.5", &data);
        let vocab = Arc::new(vec!["x".to_string(), "y".to_string()]);
        let mut rng = stream_rng(2, 0);
        let mut population: Vec<ExprTree> = (0..20)
            .map(|_| random_tree(2, &vocab, (-10.0, 10.0), &mut rng))
            .collect();
        let best = |pop: &[ExprTree]| {
            pop.iter()
                .map(|t| expr_mse(t, &data, &target).unwrap())
                .fold(f64::INFINITY, f64::min)
        };
        let mut current = best(&population);
        for _ in 0..5 {
            let linkage = build_linkage(LinkageModel::Univariate, slots_for_depth(2), &mut rng);
            population = gom_generation(&population, &linkage, &data, &target, &mut rng).unwrap();
            let next = best(&population);
            assert!(next <= current, "best MSE worsened: {current} -> {next}");
            current = next;
        }
    }

    #[test]
    fn planted_expression_retains_zero_mse() {
        let data = uniform_table(&["x", "y"], 30, (-2.0, 2.0), 5);
        let target = target_of("x + y", &data);
        let vocab = Arc::new(vec!["x".to_string(), "y".to_string()]);
        let mut rng = stream_rng(7, 0);
        let mut population: Vec<ExprTree> = (0..10)
            .map(|_| random_tree(2, &vocab, (-10.0, 10.0), &mut rng))
            .collect();
        population[4] = retemplate("x + y", 2, &vocab);
        for _ in 0..3 {
            let linkage = build_linkage(LinkageModel::Univariate, slots_for_depth(2), &mut rng);
            population = gom_generation(&population, &linkage, &data, &target, &mut rng).unwrap();
            let best = population
                .iter()
                .map(|t| expr_mse(t, &data, &target).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-30, "planted optimum lost: best {best}");
        }
    }

    #[test]
    fn ims_schedule_arithmetic() {
        let data = uniform_table(&["x"], 30, (-2.0, 2.0), 9);
        let target = target_of("x * x + 1", &data);
        let test = uniform_table(&["x"], 15, (-2.0, 2.0), 10);
        let test_target = target_of("x * x + 1", &test);

        // A budget of 4 runs exactly one population of the base size for 4
        // generations.
        let config = GpConfig {
            generations: 4,
            ..GpConfig::default()
        };
        let result = run_ims(&config, &data, &target, &test, &test_target).unwrap();
        assert_eq!(result.stats.population_sizes, vec![64]);
        assert_eq!(result.stats.population_generations, vec![4]);
        assert_eq!(result.stats.generations_run, 4);

        // One more generation lets the second population (doubled size) in.
        let config = GpConfig {
            generations: 5,
            ..GpConfig::default()
        };
        let result = run_ims(&config, &data, &target, &test, &test_target).unwrap();
        assert_eq!(result.stats.population_sizes, vec![64, 128]);
        assert_eq!(result.stats.population_generations, vec![4, 1]);

        let config = GpConfig {
            generations: 0,
            ..GpConfig::default()
        };
        match run_ims(&config, &data, &target, &test, &test_target) {
            Err(Error::BudgetTooSmall(_)) => {}
            other => panic!("expected BudgetTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn planted_linear_target_is_recovered() {
        let data = uniform_table(&["x"], 60, (-2.0, 2.0), 21);
        let target = target_of("0.5 * x + 0.1", &data);
        let test = uniform_table(&["x"], 30, (-2.0, 2.0), 22);
        let test_target = target_of("0.5 * x + 0.1", &test);
        let config = GpConfig {
            stop_fitness: Some(1e-12),
            ..GpConfig::default()
        };
        let result = run_ims(&config, &data, &target, &test, &test_target).unwrap();
        assert!(
            result.train_mse < 1e-8,
            "train MSE {} for {}",
            result.train_mse,
            format_expr(&result.expression)
        );
        assert!(result.test_mse < 1e-8);
    }

    #[test]
    fn reported_errors_are_recomputable_from_the_expression() {
        let data = uniform_table(&["x", "y"], 40, (-2.0, 2.0), 31);
        let target = target_of("x * x - y", &data);
        let test = uniform_table(&["x", "y"], 20, (-2.0, 2.0), 32);
        let test_target = target_of("x * x - y", &test);
        let config = GpConfig {
            generations: 24,
            base_population: 16,
            ..GpConfig::default()
        };
        let result = run_ims(&config, &data, &target, &test, &test_target).unwrap();
        let train = expr_mse(&result.expression, &data, &target).unwrap();
        let test_err = expr_mse(&result.expression, &test, &test_target).unwrap();
        assert_eq!(result.train_mse, train);
        assert_eq!(result.test_mse, test_err);
        assert!(result.train_mse >= 0.0 && result.test_mse >= 0.0);
    }

    #[test]
    fn evaluation_count_matches_external_counter_and_bound() {
        let data = uniform_table(&["x", "y"], 25, (-2.0, 2.0), 41);
        let target = target_of("x / (y + 3)", &data);
        let test = uniform_table(&["x", "y"], 12, (-2.0, 2.0), 42);
        let test_target = target_of("x / (y + 3)", &test);
        let config = GpConfig {
            generations: 30,
            base_population: 8,
            ..GpConfig::default()
        };
        let counter = AtomicU64::new(0);
        let result =
            run_ims_counted(&config, &data, &target, &test, &test_target, &counter).unwrap();
        assert_eq!(counter.load(Ordering::Relaxed), result.stats.evaluations);

        // Spawning evaluates each member once; a generation tries at most
        // one evaluation per member per linkage group.
        let groups = slots_for_depth(config.depth) as u64;
        let bound: u64 = result
            .stats
            .population_sizes
            .iter()
            .zip(&result.stats.population_generations)
            .map(|(&size, &gens)| size as u64 * (1 + gens as u64 * groups))
            .sum();
        assert!(result.stats.evaluations <= bound);
        assert!(result.stats.evaluations >= result.stats.population_sizes.iter().sum::<usize>() as u64);
    }

    #[test]
    fn distillation_is_deterministic() {
        let data = uniform_table(&["x", "y"], 30, (-2.0, 2.0), 51);
        let target = target_of("x - y * y", &data);
        let test = uniform_table(&["x", "y"], 15, (-2.0, 2.0), 52);
        let test_target = target_of("x - y * y", &test);
        let config = GpConfig {
            generations: 16,
            base_population: 8,
            seeds: 2,
            rng_seed: 77,
            ..GpConfig::default()
        };
        let first = distill_feature(&data, &target, &test, &test_target, &[2], &config).unwrap();
        let second = distill_feature(&data, &target, &test, &test_target, &[2], &config).unwrap();
        assert_eq!(first.runs.len(), 2);
        for (a, b) in first.runs.iter().zip(&second.runs) {
            assert_eq!(
                format_expr_precise(&a.expression),
                format_expr_precise(&b.expression)
            );
            assert_eq!(a.train_mse.to_bits(), b.train_mse.to_bits());
            assert_eq!(a.test_mse.to_bits(), b.test_mse.to_bits());
            assert_eq!(a.stats.evaluations, b.stats.evaluations);
        }
    }

    #[test]
    fn identity_target_is_recovered_by_most_seeds() {
        let data = uniform_table(&["u", "v"], 50, (-3.0, 3.0), 61);
        let target = data.column("u").unwrap().to_vec();
        let test = uniform_table(&["u", "v"], 25, (-3.0, 3.0), 62);
        let test_target = test.column("u").unwrap().to_vec();
        let config = GpConfig {
            stop_fitness: Some(1e-13),
            rng_seed: 5,
            ..GpConfig::default()
        };
        let table = distill_feature(&data, &target, &test, &test_target, &[2], &config).unwrap();
        assert_eq!(table.runs.len(), 5);
        let hits = table.runs.iter().filter(|r| r.test_mse < 1e-10).count();
        assert!(hits >= 3, "only {hits} of 5 seeds recovered the identity");
        let best = &table.best_per_depth[0];
        assert!(best.test_mse < 1e-10);
        // The selected expression is evaluation-equivalent to the variable.
        let bound = best.expression.bind(&test).unwrap();
        let col = test.column("u").unwrap();
        for i in 0..test.n_rows() {
            assert!((bound.eval_row(i) - col[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn random_tree_linkage_covers_every_position() {
        let mut rng = stream_rng(8, 3);
        let n = slots_for_depth(2);
        let groups = build_linkage(LinkageModel::RandomTree, n, &mut rng);
        let singletons = groups.iter().filter(|g| g.len() == 1).count();
        assert_eq!(singletons, n);
        assert!(groups.iter().all(|g| !g.is_empty() && g.len() < n));
        let mut covered = vec![false; n];
        for g in &groups {
            for &s in g {
                covered[s] = true;
            }
        }
        assert!(covered.iter().all(|c| *c));
    }

    #[test]
    fn quality_never_decreases_with_seed_count_selection() {
        // The per-depth pick has the minimum test MSE among its runs.
        let data = uniform_table(&["x", "y"], 30, (-2.0, 2.0), 71);
        let target = target_of("x + 2 * y", &data);
        let test = uniform_table(&["x", "y"], 15, (-2.0, 2.0), 72);
        let test_target = target_of("x + 2 * y", &test);
        let config = GpConfig {
            generations: 12,
            base_population: 8,
            seeds: 3,
            rng_seed: 4,
            ..GpConfig::default()
        };
        let table =
            distill_feature(&data, &target, &test, &test_target, &[2, 3], &config).unwrap();
        assert_eq!(table.runs.len(), 6);
        assert_eq!(table.best_per_depth.len(), 2);
        for (i, &d) in [2u32, 3].iter().enumerate() {
            let best = table.best_per_depth[i].test_mse;
            assert_eq!(table.best_per_depth[i].depth, d);
            for r in table.runs.iter().filter(|r| r.depth == d) {
                assert!(best <= r.test_mse);
            }
        }
    }
}

//! Functional-ANOVA importance of hyperparameters and their pairs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forest::{ForestError, ForestOptions, RegressionForest, RegressionTree};
use crate::space::ParamSpace;
use crate::tuners::Trial;

pub const MIN_TRIALS: usize = 20;
pub const MIN_LEAF: usize = 5;
pub const DEFAULT_FILTER: f64 = 0.005;

pub type PartitionTree = RegressionTree;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ImportanceError {
    #[error("need at least {needed} trials, got {got}")]
    TooFewTrials { needed: usize, got: usize },
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// Regression forest on encoded configurations; inactive parameters sit at
/// the encoding of their default.
pub fn fit_forest(
    space: &ParamSpace,
    trials: &[Trial],
    n_trees: usize,
    seed: u64,
) -> Result<RegressionForest, ImportanceError> {
    if trials.len() < MIN_TRIALS.max(MIN_LEAF) {
        return Err(ImportanceError::TooFewTrials {
            needed: MIN_TRIALS.max(MIN_LEAF),
            got: trials.len(),
        });
    }
    let x: Vec<Vec<f64>> = trials.iter().map(|t| space.encode(&t.config).0).collect();
    let y: Vec<f64> = trials.iter().map(|t| t.fitness).collect();
    let opts = ForestOptions {
        n_trees,
        mtry: None,
        min_leaf: MIN_LEAF,
        min_split: 2,
        bootstrap: true,
        seed,
    };
    Ok(RegressionForest::fit(&x, &y, &opts)?)
}

/// Prediction of `tree` with the dimensions in `subset` fixed to `values`
/// and every other dimension integrated out over `[0, 1]`.
pub fn marginal_prediction(tree: &PartitionTree, subset: &[usize], values: &[f64]) -> f64 {
    let mut fixed = vec![None; tree.dim];
    for (&d, &v) in subset.iter().zip(values) {
        fixed[d] = Some(v);
    }
    let mut lo = vec![0.0; tree.dim];
    let mut hi = vec![1.0; tree.dim];
    walk(tree, 0, &fixed, &mut lo, &mut hi)
}

fn walk(tree: &PartitionTree, at: usize, fixed: &[Option<f64>], lo: &mut [f64], hi: &mut [f64]) -> f64 {
    let node = &tree.nodes[at];
    let Some((d, t)) = node.split else {
        return node.value;
    };
    if let Some(v) = fixed[d] {
        let next = if v < t { node.left } else { node.right };
        return walk(tree, next, fixed, lo, hi);
    }
    let (a, b) = (lo[d], hi[d]);
    let width = b - a;
    let t = t.clamp(a, b);
    let mut total = 0.0;
    if t > a {
        hi[d] = t;
        total += (t - a) / width * walk(tree, node.left, fixed, lo, hi);
        hi[d] = b;
    }
    if b > t {
        lo[d] = t;
        total += (b - t) / width * walk(tree, node.right, fixed, lo, hi);
        lo[d] = a;
    }
    total
}

/// Total variance of one tree over the unit cube, and the variance of each
/// functional-ANOVA component for every subset of up to `max_order`
/// dimensions.
pub fn tree_decomposition(tree: &PartitionTree, max_order: usize) -> (f64, BTreeMap<Vec<usize>, f64>) {
    let k = tree.dim;
    let leaves = tree.leaf_cells();
    let mean: f64 = leaves.iter().map(|(c, v)| volume(c) * v).sum();
    let total: f64 = leaves.iter().map(|(c, v)| volume(c) * (v - mean).powi(2)).sum();
    let mut out = BTreeMap::new();
    if total <= 0.0 || k == 0 {
        return (total.max(0.0), out);
    }
    // Per-dimension interval edges induced by the tree's thresholds.
    let edges: Vec<Vec<f64>> = (0..k)
        .map(|d| {
            let mut e: Vec<f64> = vec![0.0, 1.0];
            e.extend(tree.nodes.iter().filter_map(|n| n.split).filter(|s| s.0 == d).map(|s| s.1));
            e.sort_by(f64::total_cmp);
            e.dedup();
            e
        })
        .collect();
    let mut components: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for order in 1..=max_order.min(k) {
        for subset in subsets(k, order) {
            let sizes: Vec<usize> = subset.iter().map(|&d| edges[d].len() - 1).collect();
            let cells: usize = sizes.iter().product();
            let mut marginal = vec![0.0; cells];
            for (cell, value) in &leaves {
                let other: f64 = (0..k)
                    .filter(|d| !subset.contains(d))
                    .map(|d| cell[d].1 - cell[d].0)
                    .product();
                let ranges: Vec<(usize, usize)> = subset
                    .iter()
                    .map(|&d| {
                        let e = &edges[d];
                        let s = e.iter().position(|&x| x >= cell[d].0 - 1e-15).unwrap_or(0);
                        let t = e.iter().position(|&x| x >= cell[d].1 - 1e-15).unwrap_or(e.len() - 1);
                        (s, t)
                    })
                    .collect();
                for_each_index(&ranges, |idx| {
                    marginal[flat(idx, &sizes)] += value * other;
                });
            }
            let full: Vec<(usize, usize)> = sizes.iter().map(|&n| (0, n)).collect();
            let lower: Vec<(&Vec<f64>, Vec<usize>, Vec<usize>)> = components
                .iter()
                .filter(|(sub, _)| sub.len() < subset.len() && sub.iter().all(|d| subset.contains(d)))
                .map(|(sub, comp)| {
                    let pos = sub.iter().map(|d| subset.iter().position(|x| x == d).unwrap()).collect();
                    let psizes = sub.iter().map(|&d| edges[d].len() - 1).collect();
                    (comp, pos, psizes)
                })
                .collect();
            let mut f = vec![0.0; cells];
            let mut var = 0.0;
            let mut proj = Vec::with_capacity(subset.len());
            for_each_index(&full, |idx| {
                let mut v = marginal[flat(idx, &sizes)] - mean;
                for (comp, pos, psizes) in &lower {
                    proj.clear();
                    proj.extend(pos.iter().map(|&p| idx[p]));
                    v -= comp[flat(&proj, psizes)];
                }
                let w: f64 = subset
                    .iter()
                    .zip(idx)
                    .map(|(&d, &i)| edges[d][i + 1] - edges[d][i])
                    .product();
                f[flat(idx, &sizes)] = v;
                var += w * v * v;
            });
            out.insert(subset.clone(), var);
            components.insert(subset, f);
        }
    }
    (total, out)
}

fn volume(cell: &[(f64, f64)]) -> f64 {
    cell.iter().map(|(a, b)| b - a).product()
}

fn flat(idx: &[usize], sizes: &[usize]) -> usize {
    idx.iter().zip(sizes).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Calls `f` on every index in the half-open box `ranges`.
fn for_each_index(ranges: &[(usize, usize)], mut f: impl FnMut(&[usize])) {
    if ranges.iter().any(|(s, t)| s >= t) {
        return;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&idx);
        let mut d = idx.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < ranges[d].1 {
                break;
            }
            idx[d] = ranges[d].0;
        }
    }
}

fn subsets(k: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for d in start..k {
            cur.push(d);
            rec(d + 1, k, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, order, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetImportance {
    pub params: Vec<String>,
    /// Share of the prediction variance, averaged over trees.
    pub fraction: f64,
    /// Below the report threshold; still counted in totals.
    pub filtered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub entries: Vec<SubsetImportance>,
    pub threshold: f64,
    /// Mean per-tree prediction variance.
    pub total_variance: f64,
}

impl MarginalReport {
    pub fn get(&self, params: &[&str]) -> Option<&SubsetImportance> {
        let mut want: Vec<&str> = params.to_vec();
        want.sort_unstable();
        self.entries.iter().find(|e| {
            let mut have: Vec<&str> = e.params.iter().map(String::as_str).collect();
            have.sort_unstable();
            have == want
        })
    }

    pub fn visible(&self) -> impl Iterator<Item = &SubsetImportance> {
        self.entries.iter().filter(|e| !e.filtered)
    }
}

pub fn variance_decomposition(
    forest: &RegressionForest,
    names: &[String],
    max_order: usize,
    threshold: f64,
) -> MarginalReport {
    let per_tree: Vec<(f64, BTreeMap<Vec<usize>, f64>)> =
        forest.trees.par_iter().map(|t| tree_decomposition(t, max_order)).collect();
    let n = per_tree.len().max(1) as f64;
    let mut sums: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let k = names.len();
    for order in 1..=max_order.min(k) {
        for s in subsets(k, order) {
            sums.insert(s, 0.0);
        }
    }
    for (v, parts) in &per_tree {
        if *v <= 0.0 {
            continue;
        }
        for (s, vu) in parts {
            *sums.entry(s.clone()).or_insert(0.0) += vu / v;
        }
    }
    let total_variance = per_tree.iter().map(|(v, _)| v).sum::<f64>() / n;
    let mut entries: Vec<SubsetImportance> = sums
        .into_iter()
        .map(|(s, sum)| {
            let fraction = (sum / n).max(0.0);
            SubsetImportance {
                params: s.iter().map(|&d| names[d].clone()).collect(),
                fraction,
                filtered: fraction < threshold,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.params.len().cmp(&b.params.len()));
    MarginalReport {
        entries,
        threshold,
        total_variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::RegNode;
    use crate::space::{Configuration, ParamSpec, Value};
    use std::time::Duration;

    fn two_leaf() -> PartitionTree {
        let leaf = |v: f64| RegNode { split: None, left: 0, right: 0, value: v, samples: 5 };
        RegressionTree {
            dim: 2,
            nodes: vec![
                RegNode { split: Some((0, 0.5)), left: 1, right: 2, value: 0.5, samples: 10 },
                leaf(0.2),
                leaf(0.8),
            ],
        }
    }

    #[test]
    fn marginal_of_two_leaf_tree() {
        let t = two_leaf();
        assert_eq!(marginal_prediction(&t, &[0], &[0.3]), 0.2);
        assert!((marginal_prediction(&t, &[], &[]) - 0.5).abs() < 1e-12);
        assert!((marginal_prediction(&t, &[1], &[0.9]) - 0.5).abs() < 1e-12);
        assert_eq!(marginal_prediction(&t, &[0, 1], &[0.7, 0.1]), t.predict(&[0.7, 0.1]));
    }

    fn trials(f: impl Fn(f64, f64, f64) -> f64, n: usize) -> (ParamSpace, Vec<Trial>) {
        let space = ParamSpace::new(
            "cube",
            vec![
                ParamSpec::real("a", 0.0, 1.0, 0.5),
                ParamSpec::real("b", 0.0, 1.0, 0.5),
                ParamSpec::real("c", 0.0, 1.0, 0.5),
            ],
        )
        .unwrap();
        let mut rng = crate::seeds::rng(11, &[]);
        let t = (0..n)
            .map(|i| {
                let config: Configuration = space.sample(&mut rng);
                let (a, b, c) = (config.real("a").unwrap(), config.real("b").unwrap(), config.real("c").unwrap());
                Trial { index: i + 1, fitness: f(a, b, c), config, wall: Duration::ZERO, instance: None }
            })
            .collect();
        (space, t)
    }

    #[test]
    fn conservation_on_three_parameters() {
        let (space, t) = trials(|a, b, c| a * b + (3.0 * c).sin() + a, 300);
        let forest = fit_forest(&space, &t, 10, 1).unwrap();
        for tree in &forest.trees {
            let (v, parts) = tree_decomposition(tree, 3);
            let sum: f64 = parts.values().sum();
            assert!((sum - v).abs() < 1e-6 * v.max(1.0), "{sum} vs {v}");
        }
    }

    #[test]
    fn dense_marginal_average_is_mean() {
        let (space, t) = trials(|a, b, _| a + b * b, 200);
        let forest = fit_forest(&space, &t, 3, 2).unwrap();
        let tree = &forest.trees[0];
        let n = 2000;
        let avg: f64 = (0..n)
            .map(|i| marginal_prediction(tree, &[1], &[(i as f64 + 0.5) / n as f64]))
            .sum::<f64>()
            / n as f64;
        let mean = marginal_prediction(tree, &[], &[]);
        // Piecewise-constant marginal sampled on a midpoint grid; error is
        // bounded by the number of breakpoints over the grid size.
        assert!((avg - mean).abs() < 1e-3);
    }

    #[test]
    fn constant_fitness_has_no_importance() {
        let (space, t) = trials(|_, _, _| 0.7, 50);
        let forest = fit_forest(&space, &t, 10, 3).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = variance_decomposition(&forest, &names, 2, DEFAULT_FILTER);
        assert_eq!(r.entries.len(), 6);
        assert!(r.entries.iter().all(|e| e.fraction == 0.0 && e.filtered));
    }

    #[test]
    fn step_in_one_parameter_dominates() {
        let (space, t) = trials(|_, b, _| if b < 0.4 { 0.3 } else { 0.9 }, 300);
        let forest = fit_forest(&space, &t, 30, 4).unwrap();
        assert!(forest.trees.iter().all(|tr| tr.nodes[0].split.unwrap().0 == 1));
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = variance_decomposition(&forest, &names, 2, DEFAULT_FILTER);
        assert!(r.get(&["b"]).unwrap().fraction > 0.95);
        let total: f64 = r.entries.iter().map(|e| e.fraction).sum();
        assert!(total <= 1.0 + 1e-6);
    }

    #[test]
    fn relabeling_parameters_permutes_report() {
        let (space, t) = trials(|a, b, c| a + 0.5 * b * c, 200);
        let forest = fit_forest(&space, &t, 10, 5).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r1 = variance_decomposition(&forest, &names, 2, DEFAULT_FILTER);
        let perm = [2usize, 0, 1];
        let space2 = ParamSpace::new(
            "cube",
            perm.iter().map(|&i| space.params()[i].clone()).collect(),
        )
        .unwrap();
        let forest2 = fit_forest(&space2, &t, 10, 5).unwrap();
        let names2: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
        let r2 = variance_decomposition(&forest2, &names2, 2, DEFAULT_FILTER);
        // Bootstrap draws are shared, but split tie-breaking follows dimension
        // order, so the two forests agree only up to such ties.
        for e in &r1.entries {
            let p: Vec<&str> = e.params.iter().map(String::as_str).collect();
            assert!((r2.get(&p).unwrap().fraction - e.fraction).abs() < 0.02, "{p:?}");
        }
    }

    #[test]
    fn too_few_trials() {
        let (space, t) = trials(|a, _, _| a, 19);
        assert!(matches!(fit_forest(&space, &t, 10, 1), Err(ImportanceError::TooFewTrials { .. })));
    }

    #[test]
    fn inactive_parameters_use_default_encoding() {
        let space = ParamSpace::new(
            "cond",
            vec![
                ParamSpec::boolean("r", false),
                ParamSpec::real("c", 0.0, 1.0, 0.25).when("r", Value::Bool(false)),
            ],
        )
        .unwrap();
        let cfg = Configuration::new().with("r", Value::Bool(true));
        assert_eq!(space.encode(&cfg).0[1], space.sentinel()[1]);
    }
}

//! Random regression forests over points of the unit cube, used as the SMBO
//! surrogate and as the partition trees behind fANOVA.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ForestError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples have inconsistent dimensions")]
    Ragged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOptions {
    pub n_trees: usize,
    /// Dimensions tried per split; `None` tries all of them.
    pub mtry: Option<usize>,
    /// Smallest number of samples a leaf may hold.
    pub min_leaf: usize,
    /// Nodes with fewer samples are not split.
    pub min_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_leaf: 5,
            min_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegNode {
    /// `(dimension, threshold)`; values below the threshold go left.
    pub split: Option<(usize, f64)>,
    pub left: usize,
    pub right: usize,
    pub value: f64,
    pub samples: usize,
}

/// Regression tree with nodes in preorder, root first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub dim: usize,
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        sample: &[usize],
        opts: &ForestOptions,
        rng: &mut impl Rng,
    ) -> Self {
        let dim = x.first().map_or(0, Vec::len);
        let mut tree = Self { dim, nodes: Vec::new() };
        let mut idx = sample.to_vec();
        let limits = Limits {
            min_leaf: opts.min_leaf.max(1),
            min_split: opts.min_split.max(2),
            mtry: opts.mtry,
        };
        tree.grow(x, y, &mut idx, &limits, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        idx: &mut [usize],
        limits: &Limits,
        rng: &mut impl Rng,
    ) -> usize {
        let min_leaf = limits.min_leaf;
        let at = self.nodes.len();
        let n = idx.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        self.nodes.push(RegNode {
            split: None,
            left: 0,
            right: 0,
            value: mean,
            samples: n,
        });
        let sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        if n < 2 * min_leaf || n < limits.min_split || sse <= 1e-12 * (1.0 + mean * mean) * n as f64 {
            return at;
        }
        let dims: Vec<usize> = match limits.mtry {
            Some(m) if m < self.dim => {
                let mut d = index::sample(rng, self.dim, m.max(1)).into_vec();
                d.sort_unstable();
                d
            }
            _ => (0..self.dim).collect(),
        };
        let total: f64 = idx.iter().map(|&i| y[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for &d in &dims {
            order.sort_by(|&a, &b| x[a][d].total_cmp(&x[b][d]).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (x[order[k]][d], x[order[k + 1]][d]);
                if !(a < b) {
                    continue;
                }
                // Maximizing this is minimizing the children's squared error.
                let score = left * left / nl as f64 + (total - left).powi(2) / nr as f64;
                if best.map_or(true, |(s, _, _)| score > s + 1e-12) {
                    best = Some((score, d, a + (b - a) / 2.0));
                }
            }
        }
        let Some((score, d, t)) = best else {
            return at;
        };
        if score - total * total / n as f64 <= 1e-12 {
            return at;
        }
        let mid = partition(idx, |i| x[i][d] < t);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(x, y, l, limits, rng);
        let right = self.grow(x, y, r, limits, rng);
        let node = &mut self.nodes[at];
        node.split = Some((d, t));
        node.left = left;
        node.right = right;
        at
    }

    pub fn predict(&self, point: &[f64]) -> f64 {
        let mut at = 0;
        while let Some((d, t)) = self.nodes[at].split {
            at = if point[d] < t { self.nodes[at].left } else { self.nodes[at].right };
        }
        self.nodes[at].value
    }

    pub fn is_leaf_only(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Every leaf with its axis-aligned cell of `[0, 1]^dim`.
    pub fn leaf_cells(&self) -> Vec<(Vec<(f64, f64)>, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, vec![(0.0f64, 1.0f64); self.dim])];
        while let Some((at, cell)) = stack.pop() {
            let node = &self.nodes[at];
            match node.split {
                None => out.push((cell, node.value)),
                Some((d, t)) => {
                    let mut l = cell.clone();
                    let mut r = cell;
                    l[d].1 = l[d].1.min(t);
                    r[d].0 = r[d].0.max(t);
                    stack.push((node.right, r));
                    stack.push((node.left, l));
                }
            }
        }
        out
    }
}

struct Limits {
    min_leaf: usize,
    min_split: usize,
    mtry: Option<usize>,
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(v: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = v.iter().partition(|&&i| pred(i));
    let k = yes.len();
    for (slot, i) in v.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = i;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<RegressionTree>,
}

impl RegressionForest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], opts: &ForestOptions) -> Result<Self, ForestError> {
        let needed = opts.min_leaf.max(1);
        if x.len() < needed || x.len() != y.len() {
            return Err(ForestError::TooFewSamples { needed, got: x.len().min(y.len()) });
        }
        let dim = x[0].len();
        if x.iter().any(|p| p.len() != dim) {
            return Err(ForestError::Ragged);
        }
        let n = x.len();
        let trees = (0..opts.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = crate::seeds::rng(opts.seed, &[t as u64]);
                let sample: Vec<usize> = if opts.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(x, y, &sample, opts, &mut rng)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn tree_predictions(&self, point: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(point)).collect()
    }

    /// Mean and population variance of the per-tree predictions.
    pub fn mean_var(&self, point: &[f64]) -> (f64, f64) {
        let p = self.tree_predictions(point);
        let m = p.iter().sum::<f64>() / p.len() as f64;
        let v = p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / p.len() as f64;
        (m, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).flat_map(|i| (0..n).map(move |j| vec![(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64])).collect()
    }

    #[test]
    fn constant_target_gives_single_leaves() {
        let x = grid(6);
        let y = vec![0.5; x.len()];
        let f = RegressionForest::fit(&x, &y, &ForestOptions { n_trees: 10, ..Default::default() }).unwrap();
        assert!(f.trees.iter().all(RegressionTree::is_leaf_only));
        assert_eq!(f.mean_var(&[0.3, 0.3]), (0.5, 0.0));
    }

    #[test]
    fn step_function_splits_on_its_dimension_first() {
        let x = grid(8);
        let y: Vec<f64> = x.iter().map(|p| if p[1] < 0.5 { 0.2 } else { 0.8 }).collect();
        let f = RegressionForest::fit(&x, &y, &ForestOptions { n_trees: 20, seed: 3, ..Default::default() }).unwrap();
        for t in &f.trees {
            assert_eq!(t.nodes[0].split.unwrap().0, 1);
        }
        assert!((f.mean_var(&[0.9, 0.1]).0 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn leaves_respect_min_size_and_cells_partition_cube() {
        let x = grid(10);
        let y: Vec<f64> = x.iter().map(|p| (p[0] * 7.0).sin() + p[1]).collect();
        let sample: Vec<usize> = (0..x.len()).collect();
        let mut rng = crate::seeds::rng(1, &[]);
        let t = RegressionTree::fit(&x, &y, &sample, &ForestOptions::default(), &mut rng);
        assert!(t.nodes.iter().filter(|n| n.split.is_none()).all(|n| n.samples >= 5));
        let volume: f64 = t
            .leaf_cells()
            .iter()
            .map(|(c, _)| c.iter().map(|(a, b)| b - a).product::<f64>())
            .sum();
        assert!((volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let x = grid(2);
        assert!(RegressionForest::fit(&x, &[0.0; 4], &ForestOptions::default()).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let x = grid(6);
        let y: Vec<f64> = x.iter().map(|p| p[0] * p[1]).collect();
        let o = ForestOptions { n_trees: 5, mtry: Some(1), seed: 9, ..Default::default() };
        assert_eq!(RegressionForest::fit(&x, &y, &o).unwrap(), RegressionForest::fit(&x, &y, &o).unwrap());
    }
}

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, FoldPlan};
use crate::space::Configuration;
use crate::Learner;

use super::frame::{midpoint, Frame, NodeRows};
use super::{checked, argmax, Grown, MissingRule, Split, TreeError, TreeModel};

#[derive(Debug, Clone, Copy)]
struct Params {
    /// Reduced-error pruning instead of pessimistic pruning.
    reduced_error: bool,
    confidence: f64,
    min_leaf: usize,
    folds: usize,
    no_collapse: bool,
    binary: bool,
    no_raising: bool,
    laplace: bool,
    no_mdl: bool,
}

impl Params {
    fn from(config: &Configuration) -> Self {
        let flag = |n| config.flag(n).unwrap_or(false);
        Self {
            reduced_error: flag("R"),
            confidence: config.real("C").unwrap_or(0.25),
            min_leaf: config.int("M").unwrap_or(2) as usize,
            folds: config.int("N").unwrap_or(3) as usize,
            no_collapse: flag("O"),
            binary: flag("B"),
            no_raising: flag("S"),
            laplace: flag("A"),
            no_mdl: flag("J"),
        }
    }
}

/// C4.5-style tree.
///
/// Splits maximize gain ratio among attributes whose gain reaches the
/// average gain. Categorical attributes split multiway (one branch per
/// declared level) or, with `B`, one level against the rest; numeric
/// attributes split binary with the MDL correction unless `J`. Every split
/// needs two branches with at least `M` instances.
///
/// Pruning is pessimistic with confidence `C` plus subtree raising (unless
/// `S`), or reduced-error against a stratified holdout fold when `R`. The
/// collapse pass runs unless `O`; `A` turns on Laplace leaf estimates.
pub fn fit_j48(
    data: &Dataset,
    rows: &[usize],
    config: &Configuration,
    seed: u64,
) -> Result<TreeModel, TreeError> {
    checked(Learner::J48, data, rows, config)?;
    let p = Params::from(config);
    let frame = Frame::new(data, rows);
    let all: Vec<u32> = (0..frame.len() as u32).collect();
    let mut side = vec![0u32; frame.len()];

    let tree = if p.reduced_error {
        let labels: Vec<usize> = frame.y.iter().map(|&y| y as usize).collect();
        match FoldPlan::stratified(&labels, data.class_names(), p.folds, seed, false) {
            Ok(plan) => {
                let (grow_rows, hold): (Vec<u32>, Vec<u32>) =
                    all.iter().partition(|&&i| plan.assignment[i as usize] != 0);
                let mut t = grow(&frame, &p, frame.node(&grow_rows), &mut side);
                if !p.no_collapse {
                    collapse(&mut t);
                }
                reduced_error_prune(&frame, &mut t, &hold, 0);
                t
            }
            // Too few rows for a holdout: grow on everything, leave unpruned.
            Err(_) => {
                let mut t = grow(&frame, &p, frame.root(), &mut side);
                if !p.no_collapse {
                    collapse(&mut t);
                }
                t
            }
        }
    } else {
        let mut t = grow(&frame, &p, frame.root(), &mut side);
        if !p.no_collapse {
            collapse(&mut t);
        }
        let pruner = Pessimistic::new(p.confidence, !p.no_raising);
        pruner.prune(&frame, &mut t, &all);
        t
    };
    Ok(tree.into_model(Learner::J48, data.n_features(), p.laplace, MissingRule::Majority))
}

fn grow(frame: &Frame, p: &Params, node: NodeRows, side: &mut [u32]) -> Grown {
    let counts = frame.counts(&node.idx);
    let n = node.len();
    if n < 2 * p.min_leaf || counts.iter().filter(|&&c| c > 0).count() <= 1 {
        return Grown::leaf(counts);
    }
    let Some((split, k)) = select(frame, p, &node) else {
        return Grown::leaf(counts);
    };
    let mut sizes = vec![0u32; k];
    let j = split.feature();
    for &i in &node.idx {
        if let Some(c) = split.route(frame.value(j, i)) {
            sizes[c] += 1;
        }
    }
    let largest = argmax(&sizes);
    frame.assign(&split, &node.idx, side, |_| largest);
    let parts = node.partition(side, k);
    drop(node);
    let children = parts.into_iter().map(|c| grow(frame, p, c, side)).collect();
    Grown {
        split: Some(split),
        counts,
        children,
        surrogates: Vec::new(),
    }
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// `n * H(counts)` in bits.
fn ent_n(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    xlogx(n as f64) - counts.iter().map(|&c| xlogx(c as f64)).sum::<f64>()
}

/// Split information over branch sizes plus the rows with a missing value.
fn split_info(bags: &[u32], unknown: u32, total: u32) -> f64 {
    let mut sizes = bags.to_vec();
    sizes.push(unknown);
    ent_n(&sizes) / total as f64
}

#[derive(Debug)]
struct Candidate {
    split: Split,
    branches: usize,
    gain: f64,
    ratio: f64,
}

fn select(frame: &Frame, p: &Params, node: &NodeRows) -> Option<(Split, usize)> {
    let total = node.len() as u32;
    let mut cands = Vec::new();
    for j in 0..frame.n_features() {
        let c = if !frame.is_categorical(j) {
            numeric(frame, p, j, &node.sorted[j], total)
        } else if p.binary {
            one_vs_rest(frame, p, j, &node.idx, total)
        } else {
            multiway(frame, p, j, &node.idx, total)
        };
        cands.extend(c);
    }
    if cands.is_empty() {
        return None;
    }
    let average = cands.iter().map(|c| c.gain).sum::<f64>() / cands.len() as f64;
    let mut best: Option<&Candidate> = None;
    for c in &cands {
        if c.gain >= average - 1e-3 && c.ratio > best.map_or(0.0, |b| b.ratio) {
            best = Some(c);
        }
    }
    best.map(|c| (c.split.clone(), c.branches))
}

fn multiway(frame: &Frame, p: &Params, j: usize, idx: &[u32], total: u32) -> Option<Candidate> {
    let table = frame.level_table(j, idx);
    let bags: Vec<u32> = table.iter().map(|r| r.iter().sum()).collect();
    if bags.iter().filter(|&&b| b as usize >= p.min_leaf).count() < 2 {
        return None;
    }
    let known: u32 = bags.iter().sum();
    let mut parent = vec![0u32; frame.n_classes];
    for row in &table {
        for (k, &c) in row.iter().enumerate() {
            parent[k] += c;
        }
    }
    let gain = (ent_n(&parent) - table.iter().map(|r| ent_n(r)).sum::<f64>()) / total as f64;
    let si = split_info(&bags, total - known, total);
    Some(Candidate {
        split: Split::Categorical {
            feature: j,
            branch: (0..table.len()).collect(),
        },
        branches: table.len(),
        gain,
        ratio: ratio(gain, si),
    })
}

fn ratio(gain: f64, split_info: f64) -> f64 {
    if split_info.abs() < 1e-6 {
        0.0
    } else {
        gain / split_info
    }
}

fn one_vs_rest(frame: &Frame, p: &Params, j: usize, idx: &[u32], total: u32) -> Option<Candidate> {
    let table = frame.level_table(j, idx);
    let mut parent = vec![0u32; frame.n_classes];
    for row in &table {
        for (k, &c) in row.iter().enumerate() {
            parent[k] += c;
        }
    }
    let known: u32 = parent.iter().sum();
    let mut best: Option<Candidate> = None;
    for (v, row) in table.iter().enumerate() {
        let nv: u32 = row.iter().sum();
        if (nv as usize) < p.min_leaf || ((known - nv) as usize) < p.min_leaf {
            continue;
        }
        let rest: Vec<u32> = parent.iter().zip(row).map(|(a, b)| a - b).collect();
        let gain = (ent_n(&parent) - ent_n(row) - ent_n(&rest)) / total as f64;
        let r = ratio(gain, split_info(&[nv, known - nv], total - known, total));
        if best.as_ref().map_or(true, |b| r > b.ratio) {
            let mut branch = vec![1; table.len()];
            branch[v] = 0;
            best = Some(Candidate {
                split: Split::Categorical { feature: j, branch },
                branches: 2,
                gain,
                ratio: r,
            });
        }
    }
    best
}

fn numeric(frame: &Frame, p: &Params, j: usize, sorted: &[u32], total: u32) -> Option<Candidate> {
    let known = sorted.len();
    let classes = frame.n_classes as f64;
    let min_split = (0.1 * known as f64 / classes).clamp(p.min_leaf as f64, 25f64.max(p.min_leaf as f64));
    if (known as f64) < 2.0 * min_split {
        return None;
    }
    let mut right = frame.counts(sorted);
    let mut left = vec![0u32; frame.n_classes];
    let parent = ent_n(&right);
    let mut sum_r: f64 = right.iter().map(|&c| xlogx(c as f64)).sum();
    let mut sum_l = 0.0;
    let mut cuts = 0usize;
    let mut best: Option<(f64, usize)> = None;
    for k in 0..known - 1 {
        let i = sorted[k];
        let c = frame.y[i as usize] as usize;
        sum_l += xlogx(left[c] as f64 + 1.0) - xlogx(left[c] as f64);
        sum_r += xlogx(right[c] as f64 - 1.0) - xlogx(right[c] as f64);
        left[c] += 1;
        right[c] -= 1;
        let (a, b) = (frame.value(j, i), frame.value(j, sorted[k + 1]));
        if !(a < b) {
            continue;
        }
        let nl = k + 1;
        let nr = known - nl;
        if (nl as f64) < min_split || (nr as f64) < min_split {
            continue;
        }
        cuts += 1;
        let children = xlogx(nl as f64) - sum_l + xlogx(nr as f64) - sum_r;
        let gain = (parent - children) / total as f64;
        if best.map_or(true, |(g, _)| gain > g + 1e-12) {
            best = Some((gain, k));
        }
    }
    let (mut gain, k) = best?;
    if !p.no_mdl {
        gain -= (cuts as f64).log2() / total as f64;
    }
    if gain <= 0.0 {
        return None;
    }
    let nl = (k + 1) as u32;
    let si = split_info(&[nl, known as u32 - nl], total - known as u32, total);
    let threshold = midpoint(frame.value(j, sorted[k]), frame.value(j, sorted[k + 1]));
    Some(Candidate {
        split: Split::Numeric { feature: j, threshold },
        branches: 2,
        gain,
        ratio: ratio(gain, si),
    })
}

/// Routes local rows to children; missing values follow the largest child.
fn route(frame: &Frame, t: &Grown, idx: &[u32]) -> Vec<Vec<u32>> {
    let split = t.split.as_ref().expect("internal node");
    let sizes: Vec<u32> = t.children.iter().map(Grown::total).collect();
    let largest = argmax(&sizes);
    let mut parts = vec![Vec::new(); t.children.len()];
    let j = split.feature();
    for &i in idx {
        let c = split.route(frame.value(j, i)).filter(|&c| c < parts.len()).unwrap_or(largest);
        parts[c].push(i);
    }
    parts
}

/// Replaces subtrees whose leaves make no fewer training errors than the
/// subtree root would alone.
fn collapse(t: &mut Grown) {
    if t.is_leaf() {
        return;
    }
    if t.leaf_errors() as f64 >= t.errors() as f64 - 1e-3 {
        t.make_leaf();
    } else {
        t.children.iter_mut().for_each(collapse);
    }
}

/// Extra errors predicted at confidence `cf` for `e` observed errors among
/// `n` instances: the upper confidence bound on the binomial error rate.
pub(crate) fn add_errs(n: f64, e: f64, cf: f64, z: f64) -> f64 {
    if e < 1.0 {
        let base = n * (1.0 - cf.powf(1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (add_errs(n, 1.0, cf, z) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n) + z * (f / n - f * f / n + z * z / (4.0 * n * n)).sqrt())
        / (1.0 + z * z / n);
    r * n - e
}

struct Pessimistic {
    cf: f64,
    z: f64,
    raising: bool,
}

impl Pessimistic {
    fn new(cf: f64, raising: bool) -> Self {
        let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - cf);
        Self { cf, z, raising }
    }

    fn for_counts(&self, counts: &[u32]) -> f64 {
        let total: u32 = counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let errs = (total - counts.iter().max().copied().unwrap_or(0)) as f64;
        errs + add_errs(total as f64, errs, self.cf, self.z)
    }

    fn for_tree(&self, t: &Grown) -> f64 {
        if t.is_leaf() {
            self.for_counts(&t.counts)
        } else {
            t.children.iter().map(|c| self.for_tree(c)).sum()
        }
    }

    /// Estimated errors if `idx` were classified by subtree `t`.
    fn for_branch(&self, frame: &Frame, t: &Grown, idx: &[u32]) -> f64 {
        if t.is_leaf() {
            return self.for_counts(&frame.counts(idx));
        }
        route(frame, t, idx)
            .iter()
            .zip(&t.children)
            .map(|(part, c)| self.for_branch(frame, c, part))
            .sum()
    }

    fn prune(&self, frame: &Frame, t: &mut Grown, idx: &[u32]) {
        if t.is_leaf() {
            return;
        }
        let parts = route(frame, t, idx);
        for (c, part) in t.children.iter_mut().zip(&parts) {
            self.prune(frame, c, part);
        }
        let sizes: Vec<u32> = t.children.iter().map(Grown::total).collect();
        let largest = argmax(&sizes);
        let e_largest = if self.raising {
            self.for_branch(frame, &t.children[largest], idx)
        } else {
            f64::INFINITY
        };
        let e_leaf = self.for_counts(&t.counts);
        let e_tree = self.for_tree(t);
        if e_leaf <= e_tree + 0.1 && e_leaf <= e_largest + 0.1 {
            t.make_leaf();
        } else if e_largest <= e_tree + 0.1 {
            let raised = t.children.swap_remove(largest);
            *t = raised;
            reset_counts(frame, t, idx);
            self.prune(frame, t, idx);
        }
    }
}

fn reset_counts(frame: &Frame, t: &mut Grown, idx: &[u32]) {
    if !t.is_leaf() {
        let parts = route(frame, t, idx);
        for (c, part) in t.children.iter_mut().zip(&parts) {
            reset_counts(frame, c, part);
        }
    }
    t.counts = frame.counts(idx);
}

/// Bottom-up reduced-error pruning on holdout rows. Returns the holdout
/// errors of the pruned subtree. Nodes without training instances predict
/// the class inherited from their parent.
fn reduced_error_prune(frame: &Frame, t: &mut Grown, hold: &[u32], inherited: usize) -> u32 {
    let class = if t.total() > 0 { argmax(&t.counts) } else { inherited };
    let leaf_errors = hold.iter().filter(|&&i| frame.y[i as usize] as usize != class).count() as u32;
    if t.is_leaf() {
        return leaf_errors;
    }
    let parts = route(frame, t, hold);
    let tree_errors: u32 = t
        .children
        .iter_mut()
        .zip(&parts)
        .map(|(c, part)| reduced_error_prune(frame, c, part, class))
        .sum();
    if leaf_errors <= tree_errors {
        t.make_leaf();
        leaf_errors
    } else {
        tree_errors
    }
}

//! Training rows of one fit, indexed locally, with presorted numeric columns
//! partitioned node by node.

use crate::data::Dataset;

use super::Split;

pub(crate) struct Frame<'a> {
    pub cols: Vec<&'a [f64]>,
    /// Level count per feature, 0 for numeric features.
    pub levels: Vec<usize>,
    pub rows: &'a [usize],
    pub y: Vec<u32>,
    pub n_classes: usize,
    pub any_missing: bool,
    data: &'a Dataset,
}

/// Local rows reaching a node. `sorted[j]` lists the rows with a value for
/// numeric feature `j`, ascending by value; it is empty for categoricals.
#[derive(Debug, Clone)]
pub(crate) struct NodeRows {
    pub idx: Vec<u32>,
    pub sorted: Vec<Vec<u32>>,
}

impl<'a> Frame<'a> {
    pub fn new(data: &'a Dataset, rows: &'a [usize]) -> Self {
        let cols: Vec<&[f64]> = data.features().iter().map(|f| f.raw()).collect();
        let any_missing = cols
            .iter()
            .any(|c| rows.iter().any(|&r| c[r].is_nan()));
        Self {
            levels: data.features().iter().map(|f| f.level_count()).collect(),
            y: rows.iter().map(|&r| data.label(r) as u32).collect(),
            n_classes: data.n_classes(),
            cols,
            rows,
            any_missing,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn is_categorical(&self, j: usize) -> bool {
        self.levels[j] > 0
    }

    #[inline]
    pub fn value(&self, j: usize, local: u32) -> f64 {
        self.cols[j][self.rows[local as usize]]
    }

    pub fn root(&self) -> NodeRows {
        self.node(&(0..self.len() as u32).collect::<Vec<_>>())
    }

    /// Node over an arbitrary subset of local rows.
    pub fn node(&self, idx: &[u32]) -> NodeRows {
        let mut local = vec![u32::MAX; self.data.len()];
        for &i in idx {
            local[self.rows[i as usize]] = i;
        }
        let sorted = self
            .data
            .sorted_rows()
            .iter()
            .enumerate()
            .map(|(j, order)| {
                if self.is_categorical(j) {
                    return Vec::new();
                }
                order
                    .iter()
                    .map(|&g| local[g as usize])
                    .filter(|&l| l != u32::MAX)
                    .collect()
            })
            .collect();
        NodeRows {
            idx: idx.to_vec(),
            sorted,
        }
    }

    pub fn counts(&self, idx: &[u32]) -> Vec<u32> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i as usize] as usize] += 1;
        }
        c
    }

    /// Per-level class counts of a categorical feature over `idx`.
    pub fn level_table(&self, j: usize, idx: &[u32]) -> Vec<Vec<u32>> {
        let mut t = vec![vec![0u32; self.n_classes]; self.levels[j]];
        for &i in idx {
            let v = self.value(j, i);
            if !v.is_nan() {
                t[v as usize][self.y[i as usize] as usize] += 1;
            }
        }
        t
    }

    /// Child of each row under `split`; missing values use `fallback`.
    pub fn assign(&self, split: &Split, idx: &[u32], side: &mut [u32], mut fallback: impl FnMut(u32) -> usize) {
        let j = split.feature();
        for &i in idx {
            side[i as usize] = match split.route(self.value(j, i)) {
                Some(c) => c as u32,
                None => fallback(i) as u32,
            };
        }
    }
}

impl NodeRows {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    /// Splits the node into `k` children by `side[local]`, keeping every list
    /// in its original order.
    pub fn partition(&self, side: &[u32], k: usize) -> Vec<NodeRows> {
        let mut out: Vec<NodeRows> = (0..k)
            .map(|_| NodeRows {
                idx: Vec::new(),
                sorted: vec![Vec::new(); self.sorted.len()],
            })
            .collect();
        for &i in &self.idx {
            out[side[i as usize] as usize].idx.push(i);
        }
        for (j, list) in self.sorted.iter().enumerate() {
            for &i in list {
                out[side[i as usize] as usize].sorted[j].push(i);
            }
        }
        out
    }
}

/// Best Gini cut of a numeric feature. Returns `(threshold, gain)` where the
/// gain is the drop in `n * gini` over the rows with a value; both sides must
/// hold at least `min_leaf` rows.
pub(crate) fn best_numeric_gini(frame: &Frame, j: usize, sorted: &[u32], min_leaf: usize) -> Option<(f64, f64)> {
    let n = sorted.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mut right = frame.counts(sorted);
    let mut left = vec![0u32; frame.n_classes];
    let mut sq_r: f64 = right.iter().map(|&c| (c as f64).powi(2)).sum();
    let mut sq_l = 0.0;
    let base = sq_r / n as f64;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n - 1 {
        let i = sorted[k];
        let c = frame.y[i as usize] as usize;
        sq_l += 2.0 * left[c] as f64 + 1.0;
        left[c] += 1;
        sq_r -= 2.0 * right[c] as f64 - 1.0;
        right[c] -= 1;
        let nl = k + 1;
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let a = frame.value(j, i);
        let b = frame.value(j, sorted[k + 1]);
        if !(a < b) {
            continue;
        }
        let gain = sq_l / nl as f64 + sq_r / nr as f64 - base;
        if best.map_or(true, |(_, g)| gain > g + 1e-12) {
            best = Some((midpoint(a, b), gain));
        }
    }
    best
}

pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Guard against rounding onto the lower value for adjacent floats.
    if m > a {
        m
    } else {
        b
    }
}

/// Best binary grouping of the levels of a categorical feature by Gini gain.
/// Returns the left-side flag per level (absent levels `None`) and the gain.
pub(crate) fn best_categorical_gini(
    frame: &Frame,
    j: usize,
    idx: &[u32],
    min_leaf: usize,
) -> Option<(Vec<Option<bool>>, f64)> {
    let table = frame.level_table(j, idx);
    let present: Vec<usize> = (0..table.len())
        .filter(|&l| table[l].iter().any(|&c| c > 0))
        .collect();
    if present.len() < 2 {
        return None;
    }
    let c = frame.n_classes;
    let mut total = vec![0u32; c];
    for &l in &present {
        for k in 0..c {
            total[k] += table[l][k];
        }
    }
    let n: u32 = total.iter().sum();
    let base = sq(&total) / n as f64;
    let score = |left: &[u32]| -> Option<f64> {
        let nl: u32 = left.iter().sum();
        let nr = n - nl;
        if (nl as usize) < min_leaf.max(1) || (nr as usize) < min_leaf.max(1) {
            return None;
        }
        let right: Vec<u32> = total.iter().zip(left).map(|(t, l)| t - l).collect();
        Some(sq(left) / nl as f64 + sq(&right) / nr as f64 - base)
    };

    let mut best: Option<(Vec<bool>, f64)> = None;
    let mut consider = |mask: Vec<bool>, gain: f64| {
        if best.as_ref().map_or(true, |(_, g)| gain > g + 1e-12) {
            best = Some((mask, gain));
        }
    };
    if c == 2 || present.len() > 12 {
        // Ordering levels by the share of one class makes the prefix cuts
        // optimal for two classes.
        let majority = super::argmax(&total);
        let key = |l: usize| {
            let row = &table[l];
            let k = if c == 2 { 1 } else { majority };
            row[k] as f64 / row.iter().sum::<u32>() as f64
        };
        let mut order = present.clone();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        let mut left = vec![0u32; c];
        for p in 0..order.len() - 1 {
            for k in 0..c {
                left[k] += table[order[p]][k];
            }
            if let Some(g) = score(&left) {
                let mut mask = vec![false; present.len()];
                for &l in &order[..=p] {
                    mask[present.iter().position(|&x| x == l).unwrap()] = true;
                }
                consider(mask, g);
            }
        }
    } else {
        let m = present.len() - 1;
        for bits in 0u32..(1 << m) - 1 {
            let mut left = table[present[0]].clone();
            let mut mask = vec![true; present.len()];
            for b in 0..m {
                if bits >> b & 1 == 1 {
                    for k in 0..c {
                        left[k] += table[present[b + 1]][k];
                    }
                } else {
                    mask[b + 1] = false;
                }
            }
            if let Some(g) = score(&left) {
                consider(mask, g);
            }
        }
    }
    let (mask, gain) = best?;
    let mut flags = vec![None; table.len()];
    for (p, &l) in present.iter().enumerate() {
        flags[l] = Some(mask[p]);
    }
    Some((flags, gain))
}

fn sq(counts: &[u32]) -> f64 {
    counts.iter().map(|&c| (c as f64).powi(2)).sum()
}

/// Binary categorical split from left flags; absent levels follow the side
/// that received more rows.
pub(crate) fn binary_categorical(j: usize, flags: &[Option<bool>], table: &[Vec<u32>]) -> Split {
    let (mut nl, mut nr) = (0u32, 0u32);
    for (l, f) in flags.iter().enumerate() {
        let n: u32 = table[l].iter().sum();
        match f {
            Some(true) => nl += n,
            Some(false) => nr += n,
            None => {}
        }
    }
    let absent = if nl >= nr { 0 } else { 1 };
    Split::Categorical {
        feature: j,
        branch: flags
            .iter()
            .map(|f| match f {
                Some(true) => 0,
                Some(false) => 1,
                None => absent,
            })
            .collect(),
    }
}

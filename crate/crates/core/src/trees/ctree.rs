use rand::seq::index;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::data::Dataset;
use crate::space::Configuration;
use crate::Learner;

use super::frame::{best_categorical_gini, best_numeric_gini, binary_categorical, Frame, NodeRows};
use super::{argmax, checked, Grown, MissingRule, Split, TreeError, TreeModel};

#[derive(Debug, Clone, Copy)]
struct Params {
    mincriterion: f64,
    minsplit: usize,
    minbucket: usize,
    /// Features drawn per node, 0 for all.
    mtry: usize,
    maxdepth: usize,
    stump: bool,
}

impl Params {
    fn from(config: &Configuration) -> Self {
        Self {
            mincriterion: config.real("mincriterion").unwrap_or(0.95),
            minsplit: config.int("minsplit").unwrap_or(20) as usize,
            minbucket: config.int("minbucket").unwrap_or(7) as usize,
            mtry: config.int("mtry").unwrap_or(0) as usize,
            maxdepth: config.int("maxdepth").unwrap_or(30) as usize,
            stump: config.flag("stump").unwrap_or(false),
        }
    }
}

/// Conditional-inference-style tree.
///
/// Each node tests the association of `mtry` drawn features with the class:
/// Pearson's chi-square for categorical features, one-way ANOVA for numeric
/// ones. The smallest p-value, Bonferroni-adjusted over the drawn features,
/// must satisfy `1 - p > mincriterion`; the chosen feature is then cut at
/// its best Gini split.
pub fn fit_ctree(
    data: &Dataset,
    rows: &[usize],
    config: &Configuration,
    seed: u64,
) -> Result<TreeModel, TreeError> {
    checked(Learner::Ctree, data, rows, config)?;
    let p = Params::from(config);
    let frame = Frame::new(data, rows);
    let mut rng = crate::seeds::rng(seed, &[]);
    let mut side = vec![0u32; frame.len()];
    let tree = grow(&frame, &p, frame.root(), 0, &mut rng, &mut side);
    Ok(tree.into_model(Learner::Ctree, data.n_features(), false, MissingRule::Majority))
}

fn grow(
    frame: &Frame,
    p: &Params,
    node: NodeRows,
    depth: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    side: &mut [u32],
) -> Grown {
    let counts = frame.counts(&node.idx);
    let n = node.len();
    let depth_cap = if p.stump { p.maxdepth.min(1) } else { p.maxdepth };
    if counts.iter().filter(|&&c| c > 0).count() <= 1
        || n < p.minsplit
        || n < 2 * p.minbucket
        || depth >= depth_cap
    {
        return Grown::leaf(counts);
    }
    let d = frame.n_features();
    let mut candidates: Vec<usize> = if p.mtry == 0 || p.mtry >= d {
        (0..d).collect()
    } else {
        index::sample(rng, d, p.mtry).into_vec()
    };
    candidates.sort_unstable();

    let mut best: Option<(usize, Association)> = None;
    for &j in &candidates {
        let a = if frame.is_categorical(j) {
            chi_square(frame, j, &node.idx)
        } else {
            anova(frame, j, &node.sorted[j])
        };
        if best.as_ref().map_or(true, |(_, b)| a.stronger_than(b)) {
            best = Some((j, a));
        }
    }
    let Some((j, assoc)) = best else {
        return Grown::leaf(counts);
    };
    let adjusted = (assoc.p * candidates.len() as f64).min(1.0);
    if !(1.0 - adjusted > p.mincriterion) {
        return Grown::leaf(counts);
    }
    let split = if frame.is_categorical(j) {
        best_categorical_gini(frame, j, &node.idx, p.minbucket)
            .map(|(flags, _)| binary_categorical(j, &flags, &frame.level_table(j, &node.idx)))
    } else {
        best_numeric_gini(frame, j, &node.sorted[j], p.minbucket)
            .map(|(threshold, _)| Split::Numeric { feature: j, threshold })
    };
    let Some(split) = split else {
        return Grown::leaf(counts);
    };
    let mut sizes = [0u32; 2];
    for &i in &node.idx {
        if let Some(c) = split.route(frame.value(j, i)) {
            sizes[c] += 1;
        }
    }
    let majority = argmax(&sizes);
    frame.assign(&split, &node.idx, side, |_| majority);
    let parts = node.partition(side, 2);
    drop(node);
    let children = parts
        .into_iter()
        .map(|c| grow(frame, p, c, depth + 1, rng, side))
        .collect();
    Grown {
        split: Some(split),
        counts,
        children,
        surrogates: Vec::new(),
    }
}

/// Outcome of one association test. `z` is a Wilson-Hilferty normal score of
/// the statistic, used to order tests whose p-values underflow to the same
/// value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Association {
    pub p: f64,
    pub z: f64,
}

impl Association {
    const NONE: Association = Association {
        p: 1.0,
        z: f64::NEG_INFINITY,
    };

    fn stronger_than(&self, other: &Association) -> bool {
        self.p < other.p || (self.p == other.p && self.z > other.z)
    }
}

fn wilson_hilferty(x: f64, df: f64) -> f64 {
    let v = 2.0 / (9.0 * df);
    ((x / df).cbrt() - (1.0 - v)) / v.sqrt()
}

/// Pearson chi-square test of independence between levels and classes.
pub(crate) fn chi_square(frame: &Frame, j: usize, idx: &[u32]) -> Association {
    let table = frame.level_table(j, idx);
    let rows: Vec<&Vec<u32>> = table.iter().filter(|r| r.iter().any(|&c| c > 0)).collect();
    let mut col = vec![0u32; frame.n_classes];
    for r in &rows {
        for (k, &c) in r.iter().enumerate() {
            col[k] += c;
        }
    }
    let present: Vec<usize> = (0..col.len()).filter(|&k| col[k] > 0).collect();
    let df = (rows.len().saturating_sub(1) * present.len().saturating_sub(1)) as f64;
    if df == 0.0 {
        return Association::NONE;
    }
    let n: u32 = col.iter().sum();
    let mut stat = 0.0;
    for r in &rows {
        let rs: u32 = r.iter().sum();
        for &k in &present {
            let e = rs as f64 * col[k] as f64 / n as f64;
            stat += (r[k] as f64 - e).powi(2) / e;
        }
    }
    Association {
        p: ChiSquared::new(df).expect("positive df").sf(stat),
        z: wilson_hilferty(stat, df),
    }
}

/// One-way ANOVA F test of the feature across classes.
pub(crate) fn anova(frame: &Frame, j: usize, sorted: &[u32]) -> Association {
    let c = frame.n_classes;
    let mut n = vec![0usize; c];
    let mut sum = vec![0.0; c];
    for &i in sorted {
        let k = frame.y[i as usize] as usize;
        n[k] += 1;
        sum[k] += frame.value(j, i);
    }
    let total: usize = n.iter().sum();
    let groups = n.iter().filter(|&&x| x > 0).count();
    if groups < 2 || total <= groups {
        return Association::NONE;
    }
    let grand = sum.iter().sum::<f64>() / total as f64;
    let means: Vec<f64> = (0..c).map(|k| if n[k] > 0 { sum[k] / n[k] as f64 } else { 0.0 }).collect();
    let mut ssw = 0.0;
    for &i in sorted {
        let k = frame.y[i as usize] as usize;
        ssw += (frame.value(j, i) - means[k]).powi(2);
    }
    let ssb: f64 = (0..c).map(|k| n[k] as f64 * (means[k] - grand).powi(2)).sum();
    let scale = ssb + ssw;
    if scale == 0.0 || ssb <= 1e-12 * scale {
        return Association::NONE;
    }
    let d1 = (groups - 1) as f64;
    if ssw <= 1e-12 * scale {
        return Association { p: 0.0, z: f64::INFINITY };
    }
    let d2 = (total - groups) as f64;
    let f = (ssb / d1) / (ssw / d2);
    Association {
        p: FisherSnedecor::new(d1, d2).expect("positive df").sf(f),
        z: wilson_hilferty(d1 * f, d1),
    }
}

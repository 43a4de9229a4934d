use crate::data::Dataset;
use crate::space::Configuration;
use crate::Learner;

use super::frame::{best_categorical_gini, best_numeric_gini, binary_categorical, midpoint, Frame, NodeRows};
use super::{checked, Grown, MissingRule, Split, Surrogate, TreeError, TreeModel};

const MAX_SURROGATES: usize = 5;

#[derive(Debug, Clone, Copy)]
struct Params {
    cp: f64,
    minsplit: usize,
    minbucket: usize,
    maxdepth: usize,
    usesurrogate: u8,
    /// 0 ranks surrogates by agreement count, 1 by agreement rate.
    surrogatestyle: u8,
}

impl Params {
    fn from(config: &Configuration) -> Self {
        let level = |name| config.level(name).and_then(|l| l.parse().ok()).unwrap_or(0);
        Self {
            cp: config.real("cp").unwrap_or(0.01),
            minsplit: config.int("minsplit").unwrap_or(20) as usize,
            minbucket: config.int("minbucket").unwrap_or(7) as usize,
            maxdepth: config.int("maxdepth").unwrap_or(30) as usize,
            usesurrogate: level("usesurrogate"),
            surrogatestyle: level("surrogatestyle"),
        }
    }
}

/// CART-style tree: binary Gini splits grown under `minsplit`, `minbucket`
/// and `maxdepth`, then weakest-link pruned on misclassification risk until
/// every remaining split improves the relative risk by more than `cp`.
pub fn fit_cart(
    data: &Dataset,
    rows: &[usize],
    config: &Configuration,
    _seed: u64,
) -> Result<TreeModel, TreeError> {
    checked(Learner::Cart, data, rows, config)?;
    let p = Params::from(config);
    let frame = Frame::new(data, rows);
    let mut side = vec![0u32; frame.len()];
    let mut tree = grow(&frame, &p, frame.root(), 0, &mut side);
    prune(&mut tree, p.cp);
    let missing = match p.usesurrogate {
        0 => MissingRule::Majority,
        1 => MissingRule::SurrogateOrStop,
        _ => MissingRule::SurrogateOrMajority,
    };
    Ok(tree.into_model(Learner::Cart, data.n_features(), false, missing))
}

fn grow(frame: &Frame, p: &Params, node: NodeRows, depth: usize, side: &mut [u32]) -> Grown {
    let counts = frame.counts(&node.idx);
    let n = node.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || n < p.minsplit || n < 2 * p.minbucket || depth >= p.maxdepth {
        return Grown::leaf(counts);
    }
    let Some(split) = best_split(frame, p, &node) else {
        return Grown::leaf(counts);
    };
    let surrogates = if frame.any_missing && p.usesurrogate > 0 {
        surrogates(frame, &node, &split, p.surrogatestyle)
    } else {
        Vec::new()
    };

    // Rows without the split value follow surrogates, then the larger side.
    let j = split.feature();
    let (mut nl, mut nr) = (0u32, 0u32);
    for &i in &node.idx {
        match split.route(frame.value(j, i)) {
            Some(0) => nl += 1,
            Some(_) => nr += 1,
            None => {}
        }
    }
    let majority = if nl >= nr { 0 } else { 1 };
    frame.assign(&split, &node.idx, side, |i| {
        surrogates
            .iter()
            .find_map(|s| s.route(frame.value(s.split.feature(), i)))
            .unwrap_or(majority)
    });
    let parts = node.partition(side, 2);
    drop(node);
    let children = parts
        .into_iter()
        .map(|child| grow(frame, p, child, depth + 1, side))
        .collect();
    Grown {
        split: Some(split),
        counts,
        children,
        surrogates,
    }
}

fn best_split(frame: &Frame, p: &Params, node: &NodeRows) -> Option<Split> {
    let mut best: Option<(Split, f64)> = None;
    for j in 0..frame.n_features() {
        let found = if frame.is_categorical(j) {
            best_categorical_gini(frame, j, &node.idx, p.minbucket).map(|(flags, gain)| {
                let table = frame.level_table(j, &node.idx);
                (binary_categorical(j, &flags, &table), gain)
            })
        } else {
            best_numeric_gini(frame, j, &node.sorted[j], p.minbucket)
                .map(|(threshold, gain)| (Split::Numeric { feature: j, threshold }, gain))
        };
        if let Some((split, gain)) = found {
            if gain > 1e-12 && best.as_ref().map_or(true, |(_, g)| gain > g + 1e-12) {
                best = Some((split, gain));
            }
        }
    }
    best.map(|(s, _)| s)
}

/// Surrogate splits that agree with the primary direction more often than
/// sending everything to the primary's majority side.
fn surrogates(frame: &Frame, node: &NodeRows, primary: &Split, style: u8) -> Vec<Surrogate> {
    let pj = primary.feature();
    let mut dir = vec![u8::MAX; frame.len()];
    for &i in &node.idx {
        if let Some(c) = primary.route(frame.value(pj, i)) {
            dir[i as usize] = c as u8;
        }
    }
    let mut found = Vec::new();
    for j in (0..frame.n_features()).filter(|&j| j != pj) {
        let candidate = if frame.is_categorical(j) {
            categorical_surrogate(frame, node, j, &dir)
        } else {
            numeric_surrogate(frame, node, j, &dir)
        };
        if let Some((split, flipped, agree, both, majority)) = candidate {
            if agree > majority {
                let score = if style == 0 { agree as f64 } else { agree as f64 / both as f64 };
                found.push((score, Surrogate { split, flipped, agreement: agree as f64 / both as f64 }));
            }
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.split.feature().cmp(&b.1.split.feature())));
    found.into_iter().take(MAX_SURROGATES).map(|(_, s)| s).collect()
}

type Candidate = (Split, bool, u32, u32, u32);

fn numeric_surrogate(frame: &Frame, node: &NodeRows, j: usize, dir: &[u8]) -> Option<Candidate> {
    let list: Vec<u32> = node.sorted[j].iter().copied().filter(|&i| dir[i as usize] != u8::MAX).collect();
    let both = list.len() as u32;
    if both < 2 {
        return None;
    }
    let right_total = list.iter().filter(|&&i| dir[i as usize] == 1).count() as u32;
    let majority = right_total.max(both - right_total);
    let (mut left_below, mut right_below) = (0u32, 0u32);
    let mut best: Option<(f64, bool, u32)> = None;
    for k in 0..list.len() - 1 {
        if dir[list[k] as usize] == 0 {
            left_below += 1;
        } else {
            right_below += 1;
        }
        let (a, b) = (frame.value(j, list[k]), frame.value(j, list[k + 1]));
        if !(a < b) {
            continue;
        }
        // Agreement when values below the cut go left, and when they go right.
        let straight = left_below + (right_total - right_below);
        let flipped = both - straight;
        let (agree, flip) = if flipped > straight { (flipped, true) } else { (straight, false) };
        if best.map_or(true, |(_, _, g)| agree > g) {
            best = Some((midpoint(a, b), flip, agree));
        }
    }
    let (threshold, flipped, agree) = best?;
    Some((Split::Numeric { feature: j, threshold }, flipped, agree, both, majority))
}

fn categorical_surrogate(frame: &Frame, node: &NodeRows, j: usize, dir: &[u8]) -> Option<Candidate> {
    let mut table = vec![[0u32; 2]; frame.levels[j]];
    for &i in &node.idx {
        let v = frame.value(j, i);
        if !v.is_nan() && dir[i as usize] != u8::MAX {
            table[v as usize][dir[i as usize] as usize] += 1;
        }
    }
    let both: u32 = table.iter().map(|t| t[0] + t[1]).sum();
    let left: u32 = table.iter().map(|t| t[0]).sum();
    let majority = left.max(both - left);
    let majority_side = if left >= both - left { 0 } else { 1 };
    let branch: Vec<usize> = table
        .iter()
        .map(|t| match (t[0], t[1]) {
            (0, 0) => majority_side,
            (l, r) if l >= r => 0,
            _ => 1,
        })
        .collect();
    let used: Vec<usize> = table.iter().zip(&branch).filter(|(t, _)| t[0] + t[1] > 0).map(|(_, &b)| b).collect();
    if !(used.contains(&0) && used.contains(&1)) {
        return None;
    }
    let agree = table.iter().map(|t| t[0].max(t[1])).sum();
    Some((Split::Categorical { feature: j, branch }, false, agree, both, majority))
}

/// Weakest-link pruning on misclassification risk relative to the root.
fn prune(tree: &mut Grown, cp: f64) {
    let root_risk = tree.errors() as f64;
    if root_risk == 0.0 {
        tree.make_leaf();
        return;
    }
    loop {
        let mut weakest: Option<(f64, Vec<usize>)> = None;
        let mut path = Vec::new();
        find_weakest(tree, &mut path, &mut weakest);
        match weakest {
            Some((g, path)) if g / root_risk <= cp => {
                let mut at = &mut *tree;
                for k in path {
                    at = &mut at.children[k];
                }
                at.make_leaf();
            }
            _ => break,
        }
    }
}

/// Returns the subtree's leaf count and leaf errors while tracking the
/// internal node with the smallest cost-complexity `g`.
fn find_weakest(t: &Grown, path: &mut Vec<usize>, weakest: &mut Option<(f64, Vec<usize>)>) -> (usize, u32) {
    if t.is_leaf() {
        return (1, t.errors());
    }
    let (mut leaves, mut errors) = (0, 0);
    for (k, c) in t.children.iter().enumerate() {
        path.push(k);
        let (l, e) = find_weakest(c, path, weakest);
        path.pop();
        leaves += l;
        errors += e;
    }
    let g = (t.errors() as f64 - errors as f64) / (leaves as f64 - 1.0);
    // Ties prefer the node closest to the root, which removes the most.
    if weakest.as_ref().map_or(true, |(w, p)| g < *w - 1e-12 || (g <= *w + 1e-12 && path.len() <= p.len())) {
        *weakest = Some((g, path.clone()));
    }
    (leaves, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{testutil, FeatureColumn};
    use crate::space::{builtin_space, Value};

    fn defaults() -> Configuration {
        builtin_space(Learner::Cart, 1).unwrap().defaults()
    }

    fn noisy(n: usize, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let labels = rows
            .iter()
            .map(|r| usize::from((r[0] + 0.3 * r[1] > 0.6) ^ rng.gen_bool(0.15)))
            .collect::<Vec<_>>();
        testutil::numeric(&rows, &labels)
    }

    #[test]
    fn single_split_toy() {
        let xs = [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let d = testutil::numeric(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        let c = defaults().with("minsplit", Value::Int(2)).with("minbucket", Value::Int(1));
        let m = fit_cart(&d, &(0..8).collect::<Vec<_>>(), &c, 0).unwrap();
        assert_eq!(m.node_count(), 3);
        match &m.nodes()[0].split {
            Some(Split::Numeric { threshold, .. }) => assert!(*threshold > 0.4 && *threshold <= 0.6),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn stump_and_minbucket_bounds() {
        let d = noisy(60, 1);
        let rows: Vec<usize> = (0..60).collect();
        let m = fit_cart(&d, &rows, &defaults().with("maxdepth", Value::Int(1)), 0).unwrap();
        assert!(m.node_count() <= 3);
        let m = fit_cart(&d, &rows, &defaults().with("minbucket", Value::Int(50)), 0).unwrap();
        assert_eq!(m.node_count(), 1);
    }

    #[test]
    fn monotone_in_cp_and_minbucket() {
        let d = noisy(400, 2);
        let rows: Vec<usize> = (0..400).collect();
        let size = |c: Configuration| fit_cart(&d, &rows, &c, 0).unwrap().node_count();
        let base = defaults().with("minsplit", Value::Int(2)).with("minbucket", Value::Int(1));
        let by_cp: Vec<usize> = [0.000_11, 0.01, 0.09].iter().map(|&cp| size(base.clone().with("cp", Value::Real(cp)))).collect();
        assert!(by_cp.windows(2).all(|w| w[0] >= w[1]), "{by_cp:?}");
        let base = defaults().with("cp", Value::Real(0.000_11));
        let by_mb: Vec<usize> = [1, 10, 40].iter().map(|&b| size(base.clone().with("minbucket", Value::Int(b)))).collect();
        assert!(by_mb.windows(2).all(|w| w[0] >= w[1]), "{by_mb:?}");
        let by_depth: Vec<usize> = [1, 3, 30].iter().map(|&m| size(base.clone().with("maxdepth", Value::Int(m)))).collect();
        assert!(by_depth.windows(2).all(|w| w[0] <= w[1]), "{by_depth:?}");
        let by_ms: Vec<usize> = [2, 20, 50].iter().map(|&m| size(base.clone().with("minsplit", Value::Int(m)))).collect();
        assert!(by_ms.windows(2).all(|w| w[0] >= w[1]), "{by_ms:?}");
    }

    #[test]
    fn shatters_separable_data_and_sizes_odd() {
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| (i / 3) % 2).collect();
        let d = testutil::numeric(&xs, &labels);
        let rows: Vec<usize> = (0..30).collect();
        let c = defaults()
            .with("cp", Value::Real(0.000_11))
            .with("minsplit", Value::Int(2))
            .with("minbucket", Value::Int(1));
        let m = fit_cart(&d, &rows, &c, 0).unwrap();
        assert_eq!(m.predict_rows(&d, &rows).unwrap(), labels);
        assert_eq!(m.node_count() % 2, 1);
    }

    #[test]
    fn surrogates_learned_when_values_missing() {
        // Feature 1 mirrors feature 0; some feature-0 cells are missing.
        let n = 60;
        let x0: Vec<Option<f64>> = (0..n).map(|i| if i % 7 == 0 { None } else { Some(i as f64) }).collect();
        let x1: Vec<Option<f64>> = (0..n).map(|i| Some(100.0 - i as f64)).collect();
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= 30)).collect();
        let d = Dataset::new(
            "m",
            vec![FeatureColumn::numeric("a", x0), FeatureColumn::numeric("b", x1)],
            labels.clone(),
            vec!["p".into(), "q".into()],
        )
        .unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let m = fit_cart(&d, &rows, &defaults(), 0).unwrap();
        let root = &m.nodes()[0];
        assert!(!root.surrogates.is_empty());
        assert_eq!(m.predict(&[f64::NAN, 95.0]).unwrap(), 0);
        assert_eq!(m.predict(&[f64::NAN, 45.0]).unwrap(), 1);
        let m0 = fit_cart(&d, &rows, &defaults().with("usesurrogate", Value::Level("0".into())), 0).unwrap();
        assert!(m0.nodes()[0].surrogates.is_empty());
    }

    #[test]
    fn categorical_feature_split() {
        let col = FeatureColumn::categorical(
            "c",
            vec!["r".into(), "g".into(), "b".into()],
            (0..30).map(|i| Some((i % 3) as u32)).collect(),
        );
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i % 3 == 1)).collect();
        let d = Dataset::new("c", vec![col], labels.clone(), vec!["n".into(), "y".into()]).unwrap();
        let rows: Vec<usize> = (0..30).collect();
        let m = fit_cart(&d, &rows, &defaults(), 0).unwrap();
        assert_eq!(m.node_count(), 3);
        assert_eq!(m.predict_rows(&d, &rows).unwrap(), labels);
    }
}

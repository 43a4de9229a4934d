//! Data-complexity measures and the tune-or-defaults advice built on them.
//!
//! Missing numeric cells are imputed with the column mean and missing
//! categories with the column mode before any measure is computed.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset};
use crate::Learner;

/// Sentinel for an unbounded Fisher ratio.
pub const UNBOUNDED: f64 = f64::MAX;
const L2_RIDGE: f64 = 1e-3;
const N4_SEED: u64 = 0x6e34;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ComplexityError {
    #[error("complexity measures need at least two classes")]
    OneClass,
    #[error("complexity measures need at least one feature")]
    NoFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub f1: f64,
    pub f3: f64,
    pub f4: f64,
    pub n1: f64,
    pub n2: f64,
    pub n4: f64,
    pub l2: f64,
    pub cls: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Dataset in the forms the measures need.
struct Prepared {
    labels: Vec<usize>,
    n_classes: usize,
    /// Column-major numeric view: imputed numerics plus one-hot categoricals.
    columns: Vec<Vec<f64>>,
    /// Row-major numerics scaled to `[0, 1]`.
    scaled: Vec<Vec<f64>>,
    /// Row-major categorical codes.
    codes: Vec<Vec<u32>>,
}

impl Prepared {
    fn new(data: &Dataset) -> Result<Self, ComplexityError> {
        if data.n_classes() < 2 {
            return Err(ComplexityError::OneClass);
        }
        if data.n_features() == 0 {
            return Err(ComplexityError::NoFeatures);
        }
        let n = data.len();
        let mut columns = Vec::new();
        let mut scaled = vec![Vec::new(); n];
        let mut codes = vec![Vec::new(); n];
        for f in data.features() {
            if f.is_categorical() {
                let mut counts = vec![0usize; f.level_count()];
                for r in 0..n {
                    if let Cell::Category(c) = f.cell(r) {
                        counts[c as usize] += 1;
                    }
                }
                let mode = counts.iter().enumerate().max_by_key(|(i, c)| (**c, usize::MAX - i)).map_or(0, |x| x.0) as u32;
                let col: Vec<u32> = (0..n)
                    .map(|r| match f.cell(r) {
                        Cell::Category(c) => c,
                        _ => mode,
                    })
                    .collect();
                for (row, &c) in codes.iter_mut().zip(&col) {
                    row.push(c);
                }
                for level in 0..f.level_count() as u32 {
                    if counts[level as usize] > 0 || level == mode {
                        columns.push(col.iter().map(|&c| f64::from(c == level)).collect());
                    }
                }
            } else {
                let known: Vec<f64> = f.raw().iter().copied().filter(|v| !v.is_nan()).collect();
                let mean = if known.is_empty() { 0.0 } else { known.iter().sum::<f64>() / known.len() as f64 };
                let col: Vec<f64> = f.raw().iter().map(|v| if v.is_nan() { mean } else { *v }).collect();
                let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                for (row, &v) in scaled.iter_mut().zip(&col) {
                    row.push(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 });
                }
                columns.push(col);
            }
        }
        Ok(Self {
            labels: data.labels().to_vec(),
            n_classes: data.n_classes(),
            columns,
            scaled,
            codes,
        })
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        let num: f64 = self.scaled[a].iter().zip(&self.scaled[b]).map(|(x, y)| (x - y).powi(2)).sum();
        let cat = self.codes[a].iter().zip(&self.codes[b]).filter(|(x, y)| x != y).count() as f64;
        (num + cat).sqrt()
    }
}

/// Largest per-feature Fisher ratio: between-class over within-class sum
/// of squares.
fn fisher(p: &Prepared, flags: &mut Vec<String>) -> f64 {
    let mut best: f64 = 0.0;
    for col in &p.columns {
        let mut sum = vec![0.0; p.n_classes];
        let mut cnt = vec![0.0; p.n_classes];
        for (v, &y) in col.iter().zip(&p.labels) {
            sum[y] += v;
            cnt[y] += 1.0;
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 }).collect();
        let between: f64 = means.iter().zip(&cnt).map(|(m, c)| c * (m - mean).powi(2)).sum();
        let within: f64 = col.iter().zip(&p.labels).map(|(v, &y)| (v - means[y]).powi(2)).sum();
        let scale = col.iter().map(|v| v * v).sum::<f64>().max(1.0);
        if within <= 1e-12 * scale {
            if between > 1e-12 * scale {
                if !flags.iter().any(|f| f.starts_with("f1")) {
                    flags.push("f1: zero within-class variance, reported as unbounded".into());
                }
                return UNBOUNDED;
            }
            continue;
        }
        best = best.max(between / within);
    }
    best
}

/// Rows of `rows` falling outside the overlap of class `c` and the rest on
/// column `col`.
fn separated(col: &[f64], labels: &[usize], rows: &[usize], c: usize) -> Vec<usize> {
    let (mut a_lo, mut a_hi, mut b_lo, mut b_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &r in rows {
        let v = col[r];
        if labels[r] == c {
            a_lo = a_lo.min(v);
            a_hi = a_hi.max(v);
        } else {
            b_lo = b_lo.min(v);
            b_hi = b_hi.max(v);
        }
    }
    let (lo, hi) = (a_lo.max(b_lo), a_hi.min(b_hi));
    rows.iter().copied().filter(|&r| col[r] < lo || col[r] > hi).collect()
}

fn one_vs_rest_classes(p: &Prepared) -> Vec<usize> {
    if p.n_classes == 2 {
        vec![0]
    } else {
        (0..p.n_classes).collect()
    }
}

fn feature_efficiency(p: &Prepared) -> f64 {
    let all: Vec<usize> = (0..p.len()).collect();
    let n = p.len() as f64;
    one_vs_rest_classes(p)
        .iter()
        .flat_map(|&c| p.columns.iter().map(move |col| (c, col)))
        .map(|(c, col)| separated(col, &p.labels, &all, c).len() as f64 / n)
        .fold(0.0, f64::max)
}

/// Collective feature efficiency: repeatedly remove the rows separated by
/// the best unused feature.
fn collective_efficiency(p: &Prepared) -> f64 {
    let n = p.len() as f64;
    one_vs_rest_classes(p)
        .into_iter()
        .map(|c| {
            let mut rows: Vec<usize> = (0..p.len()).collect();
            let mut unused: Vec<usize> = (0..p.columns.len()).collect();
            loop {
                let mixed = rows.iter().any(|&r| p.labels[r] == c) && rows.iter().any(|&r| p.labels[r] != c);
                if !mixed {
                    rows.clear();
                    break;
                }
                let best = unused
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| (k, separated(&p.columns[j], &p.labels, &rows, c)))
                    .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)));
                let Some((k, gone)) = best else { break };
                if gone.is_empty() {
                    break;
                }
                unused.remove(k);
                rows.retain(|r| gone.binary_search(r).is_err());
            }
            1.0 - rows.len() as f64 / n
        })
        .fold(0.0, f64::max)
}

/// Prim's minimum spanning tree; returns the parent of every vertex but 0.
fn mst(p: &Prepared) -> Vec<(usize, usize)> {
    let n = p.len();
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    key[0] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || key[v] < key[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            edges.push((parent[u], u));
        }
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&v| !in_tree[v])
            .map(|v| (v, p.dist(u, v)))
            .collect();
        for (v, d) in updates {
            if d < key[v] {
                key[v] = d;
                parent[v] = u;
            }
        }
    }
    edges
}

fn boundary_fraction(p: &Prepared) -> f64 {
    let mut on = vec![false; p.len()];
    for (a, b) in mst(p) {
        if p.labels[a] != p.labels[b] {
            on[a] = true;
            on[b] = true;
        }
    }
    on.iter().filter(|&&x| x).count() as f64 / p.len() as f64
}

fn nn_ratio(p: &Prepared, flags: &mut Vec<String>) -> f64 {
    let pairs: Vec<(Option<f64>, Option<f64>)> = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let (mut intra, mut inter): (Option<f64>, Option<f64>) = (None, None);
            for j in 0..p.len() {
                if j == i {
                    continue;
                }
                let d = p.dist(i, j);
                let slot = if p.labels[j] == p.labels[i] { &mut intra } else { &mut inter };
                if slot.map_or(true, |s| d < s) {
                    *slot = Some(d);
                }
            }
            (intra, inter)
        })
        .collect();
    if pairs.iter().any(|(a, _)| a.is_none()) {
        flags.push("n2: singleton class instances skipped".into());
    }
    let intra: f64 = pairs.iter().filter_map(|(a, _)| *a).sum();
    let inter: f64 = pairs.iter().filter_map(|(_, b)| *b).sum();
    if inter > 0.0 {
        intra / inter
    } else if intra > 0.0 {
        flags.push("n2: zero inter-class distance, reported as unbounded".into());
        UNBOUNDED
    } else {
        0.0
    }
}

/// 1-NN error on points interpolated between random same-class pairs.
fn interpolation_error(p: &Prepared) -> f64 {
    let n = p.len();
    let mut by_class = vec![Vec::new(); p.n_classes];
    for (i, &y) in p.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = crate::seeds::rng(N4_SEED, &[]);
    let synthetic: Vec<(Vec<f64>, Vec<u32>, usize)> = (0..n)
        .map(|i| {
            let same = &by_class[p.labels[i]];
            let j = same[rng.gen_range(0..same.len())];
            let l: f64 = rng.gen();
            let num = p.scaled[i].iter().zip(&p.scaled[j]).map(|(a, b)| a + l * (b - a)).collect();
            let cat = if l < 0.5 { p.codes[i].clone() } else { p.codes[j].clone() };
            (num, cat, p.labels[i])
        })
        .collect();
    let wrong = synthetic
        .par_iter()
        .filter(|(num, cat, y)| {
            let mut best = (f64::INFINITY, 0);
            for r in 0..n {
                let d: f64 = num.iter().zip(&p.scaled[r]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                    + cat.iter().zip(&p.codes[r]).filter(|(a, b)| a != b).count() as f64;
                if d < best.0 {
                    best = (d, r);
                }
            }
            p.labels[best.1] != *y
        })
        .count();
    wrong as f64 / n as f64
}

/// Training error of one-vs-rest ridge least squares on scaled numerics and
/// one-hot categoricals.
fn linear_error(p: &Prepared) -> f64 {
    let n = p.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut x = vec![1.0];
            x.extend(p.columns.iter().map(|col| col[i]));
            x
        })
        .collect();
    // Rescale columns to [0, 1] so the ridge penalty is comparable.
    let d = rows[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in &rows {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| if j == 0 { 1.0 } else if hi[j] > lo[j] { (v - lo[j]) / (hi[j] - lo[j]) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut gram = vec![vec![0.0; d]; d];
    for r in &rows {
        for a in 0..d {
            for b in 0..=a {
                gram[a][b] += r[a] * r[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[b][a] = gram[a][b];
        }
        gram[a][a] += L2_RIDGE;
    }
    let classes = if p.n_classes == 2 { 1 } else { p.n_classes };
    let weights: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut rhs = vec![0.0; d];
            for (r, &y) in rows.iter().zip(&p.labels) {
                let t = if y == c { 1.0 } else { -1.0 };
                for j in 0..d {
                    rhs[j] += r[j] * t;
                }
            }
            solve_spd(&gram, &rhs)
        })
        .collect();
    let wrong = rows
        .iter()
        .zip(&p.labels)
        .filter(|(r, &y)| {
            let scores: Vec<f64> = weights.iter().map(|w| w.iter().zip(r.iter()).map(|(a, b)| a * b).sum()).collect();
            let pred = if classes == 1 {
                usize::from(scores[0] <= 0.0)
            } else {
                let mut best = 0;
                for (i, s) in scores.iter().enumerate() {
                    if *s > scores[best] {
                        best = i;
                    }
                }
                best
            };
            pred != y
        })
        .count();
    wrong as f64 / n as f64
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if i == j { s.max(1e-300).sqrt() } else { s / l[j][j] };
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        x[i] = (y[i] - (i + 1..d).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

pub fn f1(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(fisher(&Prepared::new(data)?, &mut Vec::new()))
}

pub fn f3(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(feature_efficiency(&Prepared::new(data)?))
}

pub fn f4(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(collective_efficiency(&Prepared::new(data)?))
}

pub fn n1(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(boundary_fraction(&Prepared::new(data)?))
}

pub fn n2(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(nn_ratio(&Prepared::new(data)?, &mut Vec::new()))
}

pub fn n4(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(interpolation_error(&Prepared::new(data)?))
}

pub fn l2(data: &Dataset) -> Result<f64, ComplexityError> {
    Ok(linear_error(&Prepared::new(data)?))
}

pub fn profile(data: &Dataset) -> Result<ComplexityProfile, ComplexityError> {
    let p = Prepared::new(data)?;
    let mut flags = Vec::new();
    let f1 = fisher(&p, &mut flags);
    let n2 = nn_ratio(&p, &mut flags);
    Ok(ComplexityProfile {
        f1,
        f3: feature_efficiency(&p),
        f4: collective_efficiency(&p),
        n1: boundary_fraction(&p),
        n2,
        n4: interpolation_error(&p),
        l2: linear_error(&p),
        cls: p.n_classes,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recommendation {
    Tune,
    Defaults,
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recommendation::Tune => "tune",
            Recommendation::Defaults => "defaults",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub learner: Learner,
    pub verdict: Recommendation,
    pub fired: Vec<String>,
}

pub fn advise(p: &ComplexityProfile, learner: Learner) -> Advice {
    let mut fired = Vec::new();
    let verdict = match learner {
        Learner::J48 => {
            let mut tune = false;
            for (hit, rule) in [
                (p.cls > 8, "cls>8"),
                (p.f1 < 0.06, "f1<0.06"),
                (p.n1 > 0.218, "n1>0.218"),
            ] {
                if hit {
                    tune = true;
                    fired.push(rule.to_string());
                }
            }
            if p.f4 > 0.8695 {
                fired.push("f4>0.8695".to_string());
            }
            if tune {
                Recommendation::Tune
            } else {
                Recommendation::Defaults
            }
        }
        Learner::Cart => {
            if p.n1 >= 0.278 && p.f3 > 0.0125 && p.n4 < 0.2545 {
                fired.push("n1>=0.278&f3>0.0125&n4<0.2545".to_string());
                Recommendation::Defaults
            } else {
                fired.push("not(n1>=0.278&f3>0.0125&n4<0.2545)".to_string());
                Recommendation::Tune
            }
        }
        Learner::Ctree => {
            for (hit, rule) in [(p.n2 > 0.5595, "n2>0.5595"), (p.l2 < 0.129, "l2<0.129")] {
                if hit {
                    fired.push(rule.to_string());
                }
            }
            if fired.is_empty() {
                Recommendation::Defaults
            } else {
                Recommendation::Tune
            }
        }
    };
    Advice {
        learner,
        verdict,
        fired,
    }
}

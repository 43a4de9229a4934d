//! Paired and multi-dataset comparisons of tuning techniques.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    Unpaired(usize, usize),
    #[error("no critical value tabulated for k={k}, alpha={alpha}")]
    Untabulated { k: usize, alpha: f64 },
    #[error("need at least {needed} {what}, got {got}")]
    TooSmall { what: &'static str, needed: usize, got: usize },
    #[error("rank matrix is ragged")]
    Ragged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Improve,
    Degrade,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub n_used: usize,
    pub verdict: Verdict,
}

const EXACT_MAX_N: usize = 25;

/// Average ranks of `values` in ascending order, starting at 1.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Two-sided Wilcoxon signed-rank test of `a` against `b`. The verdict is
/// from `a`'s point of view.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alpha: f64) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Unpaired(a.len(), b.len()));
    }
    // Differences are snapped to a 1e-12 grid so that sums like 0.81-0.80
    // and 0.71-0.70 tie as intended.
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| ((x - y) * 1e12).round() / 1e12)
        .collect();
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_used: 0,
            verdict: Verdict::Tie,
        });
    }
    let ranks = average_ranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let p = if n <= EXACT_MAX_N {
        exact_p(&ranks, w_plus)
    } else {
        let nf = n as f64;
        let mut ties = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            ties += (j * j * j - j) as f64;
            i += j;
        }
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w_plus - mean) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * normal.sf(z.abs())).min(1.0)
        }
    };
    let verdict = if p < alpha {
        let m = median(&diffs);
        if m > 0.0 {
            Verdict::Improve
        } else if m < 0.0 {
            Verdict::Degrade
        } else {
            Verdict::Tie
        }
    } else {
        Verdict::Tie
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value: p,
        n_used: n,
        verdict,
    })
}

/// Exact two-sided p-value by enumerating all sign assignments of the
/// (doubled, hence integral) ranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total: f64 = counts.iter().sum();
    let w = (w_plus * 2.0).round() as usize;
    let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
    let upper: f64 = counts[w..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Mean performance of techniques (rows) on datasets (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub techniques: Vec<String>,
    pub datasets: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn new(
        techniques: Vec<String>,
        datasets: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, StatsError> {
        if values.len() != techniques.len() || values.iter().any(|r| r.len() != datasets.len()) {
            return Err(StatsError::Ragged);
        }
        Ok(Self {
            techniques,
            datasets,
            values,
        })
    }

    /// Per-dataset ranks, 1 for the highest value, ties averaged; indexed
    /// `[technique][dataset]`.
    pub fn ranks(&self) -> Vec<Vec<f64>> {
        let k = self.techniques.len();
        let mut out = vec![vec![0.0; self.datasets.len()]; k];
        for d in 0..self.datasets.len() {
            let col: Vec<f64> = self.values.iter().map(|r| -r[d]).collect();
            for (t, r) in average_ranks(&col).into_iter().enumerate() {
                out[t][d] = r;
            }
        }
        out
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        let n = self.datasets.len().max(1) as f64;
        self.ranks().iter().map(|r| r.iter().sum::<f64>() / n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

pub fn friedman_test(m: &RankMatrix, alpha: f64) -> Result<FriedmanResult, StatsError> {
    let k = m.techniques.len();
    let n = m.datasets.len();
    if k < 3 {
        return Err(StatsError::TooSmall { what: "techniques", needed: 3, got: k });
    }
    if n < 2 {
        return Err(StatsError::TooSmall { what: "datasets", needed: 2, got: n });
    }
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = m.mean_ranks().iter().map(|r| r * r).sum();
    let stat = (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let stat = if stat < 1e-12 { 0.0 } else { stat };
    let chi = ChiSquared::new(kf - 1.0).expect("positive degrees of freedom");
    let p = if stat == 0.0 { 1.0 } else { chi.sf(stat) };
    Ok(FriedmanResult {
        statistic: stat,
        p_value: p,
        reject: p < alpha,
    })
}

// Studentized range statistic divided by sqrt(2), k = 2..=10.
const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

/// Nemenyi critical difference of average ranks.
pub fn nemenyi_cd(k: usize, n_datasets: usize, alpha: f64) -> Result<f64, StatsError> {
    let table = if (alpha - 0.05).abs() < 1e-9 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-9 {
        &Q_10
    } else {
        return Err(StatsError::Untabulated { k, alpha });
    };
    if !(2..=10).contains(&k) {
        return Err(StatsError::Untabulated { k, alpha });
    }
    if n_datasets == 0 {
        return Err(StatsError::TooSmall { what: "datasets", needed: 1, got: 0 });
    }
    let kf = k as f64;
    Ok(table[k - 2] * (kf * (kf + 1.0) / (6.0 * n_datasets as f64)).sqrt())
}

/// Maximal runs of techniques, in rank order, whose mean ranks span at most
/// `cd`. Each group lists technique indices.
pub fn cd_groups(mean_ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..mean_ranks.len()).collect();
    order.sort_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]).then(a.cmp(&b)));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for i in 0..order.len() {
        let mut j = i;
        while j + 1 < order.len() && mean_ranks[order[j + 1]] - mean_ranks[order[i]] <= cd + 1e-12 {
            j += 1;
        }
        if groups.last().map_or(true, |&(_, e)| j > e) {
            groups.push((i, j));
        }
    }
    groups.into_iter().map(|(s, e)| order[s..=e].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_tie() {
        let a = [0.7, 0.8, 0.9, 0.6, 0.5];
        let r = wilcoxon_signed_rank(&a, &a, 0.05).unwrap();
        assert_eq!((r.p_value, r.verdict), (1.0, Verdict::Tie));
    }

    #[test]
    fn constant_positive_shift() {
        let b: Vec<f64> = (0..10).map(|i| 0.5 + i as f64 * 0.03).collect();
        let a: Vec<f64> = b.iter().map(|x| x + 0.01).collect();
        let r = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        assert!((r.p_value - 2.0 / 1024.0).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Improve);
        let r = wilcoxon_signed_rank(&b, &a, 0.05).unwrap();
        assert_eq!(r.verdict, Verdict::Degrade);
    }

    #[test]
    fn alternating_signs() {
        let b = vec![0.5; 10];
        let a: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.51 } else { 0.49 }).collect();
        let r = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        assert!(r.p_value > 0.5);
        assert_eq!(r.verdict, Verdict::Tie);
    }

    /// Brute force over all 2^n sign patterns.
    fn enumerate_p(ranks: &[f64], w: f64) -> f64 {
        let n = ranks.len();
        let (mut lo, mut hi) = (0u32, 0u32);
        for mask in 0..1u32 << n {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if s <= w + 1e-9 {
                lo += 1;
            }
            if s >= w - 1e-9 {
                hi += 1;
            }
        }
        (2.0 * lo.min(hi) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let a = [0.3, 0.5, 0.1, 0.8, 0.2, 0.9, 0.4, 0.7, 0.6, 0.0, 0.35, 0.45];
        let b = [0.1, 0.6, 0.1, 0.5, 0.4, 0.7, 0.5, 0.4, 0.7, 0.2, 0.15, 0.55];
        let r = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        let d: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| ((x - y) * 1e12_f64).round() / 1e12)
            .filter(|d| *d != 0.0)
            .collect();
        let ranks = average_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let w: f64 = d.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        assert_eq!(r.statistic, w);
        assert!((r.p_value - enumerate_p(&ranks, w)).abs() < 1e-12);
    }

    #[test]
    fn normal_branch_matches_reference() {
        let d: Vec<f64> = (1..=30).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let zeros = vec![0.0; 30];
        let r = wilcoxon_signed_rank(&d, &zeros, 0.05).unwrap();
        let n = 30.0f64;
        let mean = n * (n + 1.0) / 4.0;
        let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt();
        let z = (r.statistic - mean) / sd;
        let expected = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(z.abs());
        assert!((r.p_value - expected).abs() < 1e-12);
        assert_eq!(r.statistic, 465.0 - 165.0);
    }

    #[test]
    fn shift_invariance() {
        let a = [0.3, 0.5, 0.1, 0.8, 0.2, 0.9, 0.4];
        let b = [0.1, 0.6, 0.2, 0.5, 0.4, 0.7, 0.5];
        let p0 = wilcoxon_signed_rank(&a, &b, 0.05).unwrap().p_value;
        let a2: Vec<f64> = a.iter().map(|x| x + 0.25).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + 0.25).collect();
        assert!((wilcoxon_signed_rank(&a2, &b2, 0.05).unwrap().p_value - p0).abs() < 1e-12);
    }

    fn matrix(values: Vec<Vec<f64>>) -> RankMatrix {
        let k = values.len();
        let n = values[0].len();
        RankMatrix::new(
            (0..k).map(|i| format!("t{i}")).collect(),
            (0..n).map(|i| format!("d{i}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn ranks_sum_per_dataset() {
        let m = matrix(vec![vec![0.9, 0.5, 0.7], vec![0.9, 0.6, 0.7], vec![0.8, 0.6, 0.7]]);
        let r = m.ranks();
        for d in 0..3 {
            let s: f64 = r.iter().map(|row| row[d]).sum();
            assert_eq!(s, 6.0);
        }
        assert_eq!(r[0][0], 1.5);
        assert_eq!(r[2][0], 3.0);
    }

    #[test]
    fn friedman_identical_and_hand_computed() {
        let m = matrix(vec![vec![0.5; 4]; 3]);
        let f = friedman_test(&m, 0.05).unwrap();
        assert_eq!((f.statistic, f.p_value, f.reject), (0.0, 1.0, false));
        // First technique always best, the other two tied: ranks 1, 2.5, 2.5.
        let m = matrix(vec![vec![0.9; 4], vec![0.5; 4], vec![0.5; 4]]);
        let f = friedman_test(&m, 0.05).unwrap();
        let hand = 12.0 * 4.0 / 12.0 * (1.0 + 6.25 + 6.25 - 3.0 * 16.0 / 4.0);
        assert!((f.statistic - hand).abs() < 1e-12);
        let mut swapped = m.clone();
        for row in &mut swapped.values {
            row.reverse();
        }
        assert_eq!(friedman_test(&swapped, 0.05).unwrap(), f);
    }

    #[test]
    fn friedman_needs_three_techniques() {
        assert!(friedman_test(&matrix(vec![vec![0.1, 0.2]; 2]), 0.05).is_err());
    }

    #[test]
    fn critical_difference() {
        let cd = nemenyi_cd(7, 94, 0.1).unwrap();
        assert!((cd - 0.848).abs() < 0.01);
        let ratio = nemenyi_cd(5, 10, 0.05).unwrap() / nemenyi_cd(5, 40, 0.05).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
        assert!((nemenyi_cd(2, 9, 0.05).unwrap() - 1.960 / 3.0).abs() < 1e-12);
        assert!(nemenyi_cd(11, 9, 0.05).is_err());
        assert!(nemenyi_cd(4, 9, 0.01).is_err());
        for k in 2..10 {
            assert!(nemenyi_cd(k + 1, 20, 0.1).unwrap() > nemenyi_cd(k, 20, 0.1).unwrap());
            assert!(nemenyi_cd(k, 21, 0.1).unwrap() < nemenyi_cd(k, 20, 0.1).unwrap());
        }
    }

    #[test]
    fn groups() {
        assert_eq!(cd_groups(&[1.0, 1.5, 3.0], 1.0), vec![vec![0, 1], vec![2]]);
        assert_eq!(cd_groups(&[2.0, 2.0, 2.0], 0.1), vec![vec![0, 1, 2]]);
        assert_eq!(cd_groups(&[3.0, 1.0, 2.0], 0.5), vec![vec![1], vec![2], vec![0]]);
        assert_eq!(
            cd_groups(&[1.0, 1.8, 2.6, 3.4], 1.0),
            vec![vec![0, 1], vec![1, 2], vec![2, 3]]
        );
    }
}

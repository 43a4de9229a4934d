//! Budgeted black-box tuners maximizing a fitness over a [`ParamSpace`].
//!
//! Every technique spends its budget in batches whose fitness calls may run
//! concurrently; results are folded back in candidate order, so a run is a
//! pure function of `(technique, space, objective, budget, seed)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};

use crate::forest::{ForestOptions, RegressionForest};
use crate::space::{Configuration, ParamKind, ParamSpace, Value, REAL_MARGIN};
use crate::stats::average_ranks;

/// Population, swarm and initial-design size shared by all techniques.
pub const POPULATION: usize = 10;
/// Number of resampling instances available to iterated racing.
pub const IRACE_INSTANCES: usize = 100;

const GA_CROSSOVER: f64 = 0.8;
const GA_MUTATION: f64 = 0.05;
const GA_SCALING: f64 = 2.0;
const PSO_INFORMANTS: usize = 3;
const EDA_SELECTED: usize = 5;
const SMBO_TREES: usize = 100;
const SMBO_CANDIDATES: usize = 1000;
const SMBO_MUTATED: usize = 10;
const SMBO_NODESIZE: usize = 5;
const IRACE_T_FIRST: usize = 100;
const IRACE_T_EACH: usize = 1;
const IRACE_ALPHA: f64 = 0.05;
const IRACE_MU: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Rs,
    Ga,
    Pso,
    Eda,
    Smbo,
    Irace,
}

impl Technique {
    pub const ALL: [Technique; 6] = [
        Technique::Rs,
        Technique::Ga,
        Technique::Pso,
        Technique::Eda,
        Technique::Smbo,
        Technique::Irace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Rs => "rs",
            Technique::Ga => "ga",
            Technique::Pso => "pso",
            Technique::Eda => "eda",
            Technique::Smbo => "smbo",
            Technique::Irace => "irace",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = TunerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Technique::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| TunerError::UnknownTechnique(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TunerError {
    #[error("budget below initial population ({budget} < {population})")]
    BudgetBelowPopulation { budget: usize, population: usize },
    #[error("unknown technique {0:?}")]
    UnknownTechnique(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunerBudget {
    pub max_evaluations: usize,
    pub consumed: usize,
}

impl TunerBudget {
    pub fn new(max_evaluations: usize) -> Self {
        Self {
            max_evaluations,
            consumed: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.max_evaluations - self.consumed
    }

    fn charge(&mut self, n: usize) {
        assert!(n <= self.remaining(), "budget overdrawn");
        self.consumed += n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// 1-based position in the path.
    pub index: usize,
    pub config: Configuration,
    pub fitness: f64,
    pub wall: Duration,
    /// Resampling instance, for racing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationPath {
    pub trials: Vec<Trial>,
}

impl OptimizationPath {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn push(&mut self, config: Configuration, fitness: f64, wall: Duration, instance: Option<usize>) {
        let index = self.trials.len() + 1;
        self.trials.push(Trial {
            index,
            config,
            fitness,
            wall,
            instance,
        });
    }

    /// Best fitness among the first `i + 1` trials, for every `i`.
    pub fn cumulative_best(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                if t.fitness > best {
                    best = t.fitness;
                }
                best
            })
            .collect()
    }

    /// Highest-fitness trial; the earliest wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials.iter().fold(None, |acc: Option<&Trial>, t| match acc {
            Some(b) if b.fitness >= t.fitness => Some(b),
            _ => Some(t),
        })
    }
}

/// The function being maximized.
pub trait Objective: Sync {
    fn evaluate(&self, config: &Configuration) -> f64;

    /// Fitness on one resampling instance; instance-free objectives ignore it.
    fn evaluate_on(&self, config: &Configuration, instance: usize) -> f64 {
        let _ = instance;
        self.evaluate(config)
    }
}

impl<F: Fn(&Configuration) -> f64 + Sync> Objective for F {
    fn evaluate(&self, config: &Configuration) -> f64 {
        self(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub technique: Technique,
    pub best: Configuration,
    /// For racing, the elite's mean over the instances it was run on.
    pub best_fitness: f64,
    pub path: OptimizationPath,
    pub budget: TunerBudget,
}

pub fn run_tuner<O: Objective + ?Sized>(
    technique: Technique,
    space: &ParamSpace,
    objective: &O,
    budget: usize,
    seed: u64,
) -> Result<TuneResult, TunerError> {
    if budget < POPULATION {
        return Err(TunerError::BudgetBelowPopulation {
            budget,
            population: POPULATION,
        });
    }
    let mut run = Run {
        space,
        objective,
        budget: TunerBudget::new(budget),
        path: OptimizationPath::default(),
        rng: crate::seeds::rng(seed, &[0x7475_6e65, technique as u64]),
        seed,
    };
    let elite = match technique {
        Technique::Rs => {
            run.random_search();
            None
        }
        Technique::Ga => {
            run.genetic();
            None
        }
        Technique::Pso => {
            run.swarm();
            None
        }
        Technique::Eda => {
            run.copula_eda();
            None
        }
        Technique::Smbo => {
            run.smbo();
            None
        }
        Technique::Irace => Some(run.irace()),
    };
    let (best, best_fitness) = match elite {
        Some(e) => e,
        None => {
            let b = run.path.best().expect("budget of at least one trial");
            (b.config.clone(), b.fitness)
        }
    };
    Ok(TuneResult {
        technique,
        best,
        best_fitness,
        path: run.path,
        budget: run.budget,
    })
}

struct Run<'a, O: ?Sized> {
    space: &'a ParamSpace,
    objective: &'a O,
    budget: TunerBudget,
    path: OptimizationPath,
    rng: ChaCha8Rng,
    seed: u64,
}

impl<O: Objective + ?Sized> Run<'_, O> {
    fn evaluate(&mut self, configs: Vec<Configuration>) -> Vec<f64> {
        self.evaluate_on(configs.into_iter().map(|c| (c, None)).collect())
    }

    fn evaluate_on(&mut self, jobs: Vec<(Configuration, Option<usize>)>) -> Vec<f64> {
        self.budget.charge(jobs.len());
        let objective = self.objective;
        let results: Vec<(f64, Duration)> = jobs
            .par_iter()
            .map(|(c, inst)| {
                let start = Instant::now();
                let f = match inst {
                    Some(i) => objective.evaluate_on(c, *i),
                    None => objective.evaluate(c),
                };
                (f, start.elapsed())
            })
            .collect();
        let mut out = Vec::with_capacity(jobs.len());
        for ((config, inst), (f, wall)) in jobs.into_iter().zip(results) {
            self.path.push(config, f, wall, inst);
            out.push(f);
        }
        out
    }

    fn decode(&self, x: &[f64]) -> Configuration {
        self.space.decode(x).expect("vector has the space's dimension")
    }

    fn uniform_vector(&mut self) -> Vec<f64> {
        (0..self.space.dim()).map(|_| self.rng.gen::<f64>()).collect()
    }

    fn evaluate_vectors(&mut self, xs: &[Vec<f64>]) -> Vec<f64> {
        let configs = xs.iter().map(|x| self.decode(x)).collect();
        self.evaluate(configs)
    }

    fn random_search(&mut self) {
        while self.budget.remaining() > 0 {
            let n = POPULATION.min(self.budget.remaining());
            let configs = (0..n).map(|_| self.space.sample(&mut self.rng)).collect();
            self.evaluate(configs);
        }
    }

    fn genetic(&mut self) {
        let mut pop: Vec<Vec<f64>> = (0..POPULATION).map(|_| self.uniform_vector()).collect();
        let mut fit = self.evaluate_vectors(&pop);
        while self.budget.remaining() > 0 {
            let e = argmax(&fit);
            let n = (POPULATION - 1).min(self.budget.remaining());
            let children = ga_offspring(&pop, &fit, n, GA_MUTATION, &mut self.rng);
            let child_fit = self.evaluate_vectors(&children);
            let elite = (pop.swap_remove(e), fit[e]);
            pop = std::iter::once(elite.0).chain(children).collect();
            fit = std::iter::once(elite.1).chain(child_fit).collect();
        }
    }

    fn swarm(&mut self) {
        let dim = self.space.dim();
        let mut swarm = Swarm::new(POPULATION, dim, &mut self.rng);
        let fit = self.evaluate_vectors(&swarm.x);
        swarm.observe(&fit, POPULATION);
        while self.budget.remaining() > 0 {
            let n = POPULATION.min(self.budget.remaining());
            swarm.step(n, &mut self.rng);
            let fit = self.evaluate_vectors(&swarm.x[..n].to_vec());
            if !swarm.observe(&fit, n) {
                swarm.relink(&mut self.rng);
            }
        }
    }

    fn copula_eda(&mut self) {
        let mut pop: Vec<Vec<f64>> = (0..POPULATION).map(|_| self.uniform_vector()).collect();
        let mut fit = self.evaluate_vectors(&pop);
        while self.budget.remaining() > 0 {
            let order = ranking(&fit);
            let selected: Vec<Vec<f64>> = order[..EDA_SELECTED.min(pop.len())]
                .iter()
                .map(|&i| pop[i].clone())
                .collect();
            let model = Copula::fit(&selected);
            let n = (POPULATION - 1).min(self.budget.remaining());
            let offspring: Vec<Vec<f64>> = (0..n).map(|_| model.sample(&mut self.rng)).collect();
            let child_fit = self.evaluate_vectors(&offspring);
            let e = order[0];
            let elite = (pop.swap_remove(e), fit[e]);
            pop = std::iter::once(elite.0).chain(offspring).collect();
            fit = std::iter::once(elite.1).chain(child_fit).collect();
        }
    }

    fn smbo(&mut self) {
        let dim = self.space.dim();
        let design = latin_hypercube(POPULATION, dim, &mut self.rng);
        self.evaluate_vectors(&design);
        let mut step = 0u64;
        while self.budget.remaining() > 0 {
            step += 1;
            let x: Vec<Vec<f64>> = self.path.trials.iter().map(|t| self.space.encode(&t.config).0).collect();
            let y: Vec<f64> = self.path.trials.iter().map(|t| t.fitness).collect();
            let proposal = self.smbo_step(&x, &y, step);
            self.evaluate_vectors(&[proposal]);
        }
    }

    fn smbo_step(&mut self, x: &[Vec<f64>], y: &[f64], step: u64) -> Vec<f64> {
        let dim = self.space.dim();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(hi > lo) {
            return self.uniform_vector();
        }
        let opts = ForestOptions {
            n_trees: SMBO_TREES,
            mtry: Some((dim + 2) / 3),
            min_leaf: 1,
            min_split: SMBO_NODESIZE,
            bootstrap: true,
            seed: crate::seeds::derive(self.seed, &[0x736d_626f, step]),
        };
        let Ok(forest) = RegressionForest::fit(x, y, &opts) else {
            return self.uniform_vector();
        };
        let mut candidates: Vec<Vec<f64>> = (0..SMBO_CANDIDATES).map(|_| self.uniform_vector()).collect();
        for &i in ranking(y).iter().take(SMBO_MUTATED) {
            let c = x[i]
                .iter()
                .map(|&v| {
                    let z: f64 = self.rng.sample(StandardNormal);
                    (v + 0.1 * z).clamp(0.0, 1.0)
                })
                .collect();
            candidates.push(c);
        }
        let ei: Vec<f64> = candidates
            .par_iter()
            .map(|c| {
                let (m, v) = forest.mean_var(c);
                expected_improvement(m, v.sqrt(), hi)
            })
            .collect();
        candidates.swap_remove(argmax(&ei))
    }

    fn irace(&mut self) -> (Configuration, f64) {
        let k = self.space.dim().max(1) as f64;
        let n_iter = 2 + k.log2().round() as usize;
        let n_min = (2.0 + k.log2()).floor() as usize;
        let mut sampler = IraceSampler::new(self.space, n_iter);
        let mut elites: Vec<Candidate> = Vec::new();
        let mut next_id = 0usize;
        for j in 1.. {
            let remaining = self.budget.remaining();
            let mut b_j = if j <= n_iter { remaining / (n_iter - j + 1) } else { remaining };
            let n_j = IRACE_MU.max(b_j / (IRACE_MU + j.min(5)));
            let mut fresh = n_j.saturating_sub(elites.len()).max(1);
            if fresh > b_j && j == 1 {
                b_j = remaining;
                fresh = fresh.min(remaining);
            }
            if fresh > b_j {
                break;
            }
            if j > 1 {
                sampler.shrink(fresh);
            }
            let mut cands = elites.clone();
            for _ in 0..fresh {
                let (config, probs) = if j == 1 {
                    (self.space.sample(&mut self.rng), sampler.initial_probs())
                } else {
                    sampler.sample_from(&elites, j, &mut self.rng)
                };
                cands.push(Candidate {
                    id: next_id,
                    config,
                    probs,
                    results: BTreeMap::new(),
                });
                next_id += 1;
            }
            elites = self.race(cands, b_j, n_min);
        }
        let best = &elites[0];
        (best.config.clone(), best.mean(best.results.len()))
    }

    /// Races `cands` over the instance pool in order; returns the survivors
    /// best first, truncated to `n_min`.
    fn race(&mut self, mut cands: Vec<Candidate>, race_budget: usize, n_min: usize) -> Vec<Candidate> {
        let mut alive: Vec<usize> = (0..cands.len()).collect();
        let mut spent = 0;
        let mut seen = 0;
        let mut block_results = 0;
        let mut tested = false;
        let mut next_test = IRACE_T_FIRST;
        for inst in 0..IRACE_INSTANCES {
            let missing: Vec<usize> = alive
                .iter()
                .copied()
                .filter(|&c| !cands[c].results.contains_key(&inst))
                .collect();
            if missing.len() > race_budget - spent {
                break;
            }
            let jobs = missing.iter().map(|&c| (cands[c].config.clone(), Some(inst))).collect();
            let fit = self.evaluate_on(jobs);
            for (&c, f) in missing.iter().zip(fit) {
                cands[c].results.insert(inst, f);
            }
            spent += missing.len();
            seen = inst + 1;
            block_results += alive.len();
            if alive.len() > 1 && seen >= 2 && block_results >= next_test {
                let block: Vec<Vec<f64>> = (0..seen)
                    .map(|i| alive.iter().map(|&c| cands[c].results[&i]).collect())
                    .collect();
                let keep = race_survivors(&block, IRACE_ALPHA);
                alive = alive.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
                tested = true;
                next_test = block_results + IRACE_T_EACH;
            }
            if alive.len() <= 1 || (tested && alive.len() <= n_min) {
                break;
            }
        }
        let seen = seen.max(1);
        alive.sort_by(|&a, &b| {
            cands[b]
                .mean(seen)
                .total_cmp(&cands[a].mean(seen))
                .then(cands[a].id.cmp(&cands[b].id))
        });
        alive.truncate(n_min.max(1));
        alive.into_iter().map(|c| cands[c].clone()).collect()
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    id: usize,
    config: Configuration,
    probs: BTreeMap<String, Vec<f64>>,
    results: BTreeMap<usize, f64>,
}

impl Candidate {
    /// Mean over instances `0..upto` that have results.
    fn mean(&self, upto: usize) -> f64 {
        let v: Vec<f64> = self.results.range(..upto).map(|(_, f)| *f).collect();
        if v.is_empty() {
            f64::NEG_INFINITY
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// Friedman test over a block matrix (`[instance][candidate]`, higher is
/// better) followed by Conover's post-hoc comparison against the best.
/// Returns which candidates survive.
pub fn race_survivors(block: &[Vec<f64>], alpha: f64) -> Vec<bool> {
    let n = block.len();
    let k = block.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return vec![true; k];
    }
    let (nf, kf) = (n as f64, k as f64);
    let mut rank_sums = vec![0.0; k];
    let mut sum_r2 = 0.0;
    let mut ties = 0.0;
    for row in block {
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        let r = average_ranks(&neg);
        for (s, v) in rank_sums.iter_mut().zip(&r) {
            *s += v;
        }
        sum_r2 += r.iter().map(|v| v * v).sum::<f64>();
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < k {
            let t = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count() as f64;
            ties += t * t * t - t;
            i += t as usize;
        }
    }
    let denom = nf * kf * (kf + 1.0) - ties / (kf - 1.0);
    if denom <= 1e-12 {
        return vec![true; k];
    }
    let centre = nf * (kf + 1.0) / 2.0;
    let stat = 12.0 * rank_sums.iter().map(|r| (r - centre).powi(2)).sum::<f64>() / denom;
    let p = ChiSquared::new(kf - 1.0).expect("dof").sf(stat);
    if !(p < alpha) {
        return vec![true; k];
    }
    let df = (nf - 1.0) * (kf - 1.0);
    // Zero when every block ranks the candidates identically.
    let spread = (2.0 * (nf * sum_r2 - rank_sums.iter().map(|r| r * r).sum::<f64>()) / df).max(0.0);
    let t = StudentsT::new(0.0, 1.0, df).expect("dof").inverse_cdf(1.0 - alpha / 2.0);
    let crit = t * spread.sqrt();
    let best = rank_sums.iter().copied().fold(f64::INFINITY, f64::min);
    rank_sums.iter().map(|r| r - best <= crit + 1e-9).collect()
}

/// Per-parameter sampling distributions for iterated racing, in native units.
struct IraceSampler<'a> {
    space: &'a ParamSpace,
    n_iter: usize,
    sd: BTreeMap<String, f64>,
}

impl<'a> IraceSampler<'a> {
    fn new(space: &'a ParamSpace, n_iter: usize) -> Self {
        let sd = space
            .params()
            .iter()
            .filter_map(|p| match p.kind {
                ParamKind::Real { lo, hi } => Some((p.name.clone(), (hi - lo) / 2.0)),
                ParamKind::Integer { lo, hi } => Some((p.name.clone(), (hi - lo + 1) as f64 / 2.0)),
                _ => None,
            })
            .collect();
        Self { space, n_iter, sd }
    }

    fn initial_probs(&self) -> BTreeMap<String, Vec<f64>> {
        self.space
            .params()
            .iter()
            .filter(|p| p.level_count() > 0)
            .map(|p| (p.name.clone(), vec![1.0 / p.level_count() as f64; p.level_count()]))
            .collect()
    }

    fn shrink(&mut self, fresh: usize) {
        let factor = (1.0 / fresh as f64).powf(1.0 / self.space.dim().max(1) as f64);
        for sd in self.sd.values_mut() {
            *sd *= factor;
        }
    }

    /// Picks a parent elite by rank weight and perturbs each active
    /// parameter around the parent's value.
    fn sample_from(
        &self,
        elites: &[Candidate],
        iteration: usize,
        rng: &mut impl Rng,
    ) -> (Configuration, BTreeMap<String, Vec<f64>>) {
        let ne = elites.len();
        let weights: Vec<f64> = (0..ne).map(|r| (ne - r) as f64).collect();
        let parent = &elites[roulette(&weights, rng)];
        let mut probs = parent.probs.clone();
        let mut config = Configuration::new();
        let step = (iteration - 1) as f64 / self.n_iter as f64;
        for p in self.space.params() {
            if !self.space.is_active(p, &config) {
                continue;
            }
            let Some(current) = parent.config.get(&p.name).filter(|v| p.unset.as_ref() != Some(*v)) else {
                config.set(&p.name, p.sample(rng));
                continue;
            };
            let value = match &p.kind {
                ParamKind::Real { lo, hi } => {
                    let Value::Real(m) = current else { unreachable!("validated parent") };
                    let (a, b) = (lo + REAL_MARGIN, hi - REAL_MARGIN);
                    Value::Real(truncnorm_quantile(rng.gen(), *m, self.sd[&p.name], a, b))
                }
                ParamKind::Integer { lo, hi } => {
                    let Value::Int(m) = current else { unreachable!("validated parent") };
                    let (a, b) = (*lo as f64 - 0.5, *hi as f64 + 0.5);
                    let x = truncnorm_quantile(rng.gen(), *m as f64, self.sd[&p.name], a, b);
                    Value::Int((x.round() as i64).clamp(*lo, *hi))
                }
                ParamKind::Categorical { levels } => {
                    let Value::Level(l) = current else { unreachable!("validated parent") };
                    let at = levels.iter().position(|x| x == l).unwrap_or(0);
                    let pr = soften(probs.get_mut(&p.name).expect("level table"), at, step);
                    Value::Level(levels[roulette(pr, rng)].clone())
                }
                ParamKind::Boolean => {
                    let Value::Bool(b) = current else { unreachable!("validated parent") };
                    let pr = soften(probs.get_mut(&p.name).expect("level table"), usize::from(*b), step);
                    Value::Bool(roulette(pr, rng) == 1)
                }
            };
            config.set(&p.name, value);
        }
        (config, probs)
    }
}

fn soften(p: &mut [f64], at: usize, step: f64) -> &[f64] {
    for v in p.iter_mut() {
        *v *= 1.0 - step;
    }
    p[at] += step;
    p
}

/// Index of the largest value; the first wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Indices by decreasing value, ties in index order.
fn ranking(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

fn roulette(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.gen_range(0..weights.len());
    }
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Quantile `u` of a normal `(mean, sd)` truncated to `[a, b]`.
pub fn truncnorm_quantile(u: f64, mean: f64, sd: f64, a: f64, b: f64) -> f64 {
    if !(sd > 0.0) {
        return mean.clamp(a, b);
    }
    let n = std_normal();
    let (pa, pb) = (n.cdf((a - mean) / sd), n.cdf((b - mean) / sd));
    if !(pb - pa > 1e-300) {
        return mean.clamp(a, b);
    }
    let p = (pa + u * (pb - pa)).clamp(1e-16, 1.0 - 1e-16);
    (mean + sd * n.inverse_cdf(p)).clamp(a, b)
}

/// Linear fitness scaling with maximum at `GA_SCALING` times the mean, on
/// fitness shifted to a zero minimum.
fn scaled_weights(fitness: &[f64]) -> Vec<f64> {
    let min = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let f: Vec<f64> = fitness.iter().map(|v| v - min).collect();
    let avg = f.iter().sum::<f64>() / f.len() as f64;
    let max = f.iter().copied().fold(0.0, f64::max);
    if !(max - avg > 1e-15) {
        return vec![1.0; f.len()];
    }
    let c = GA_SCALING;
    // With the shift, min = 0, so the scaled minimum is non-negative exactly
    // when max <= c * avg.
    let (a, b) = if max <= c * avg {
        let d = max - avg;
        ((c - 1.0) * avg / d, avg * (max - c * avg) / d)
    } else {
        (1.0, 0.0)
    };
    f.iter().map(|v| (a * v + b).max(0.0)).collect()
}

/// Produces `count` offspring by roulette selection on scaled fitness,
/// local arithmetic crossover and random-reset mutation.
pub fn ga_offspring(
    pop: &[Vec<f64>],
    fitness: &[f64],
    count: usize,
    mutation: f64,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    let w = scaled_weights(fitness);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = &pop[roulette(&w, rng)];
        let b = &pop[roulette(&w, rng)];
        let (mut c1, mut c2) = (a.clone(), b.clone());
        if rng.gen_bool(GA_CROSSOVER) {
            for j in 0..a.len() {
                let l: f64 = rng.gen();
                c1[j] = l * a[j] + (1.0 - l) * b[j];
                c2[j] = (1.0 - l) * a[j] + l * b[j];
            }
        }
        for c in [&mut c1, &mut c2] {
            for v in c.iter_mut() {
                if rng.gen::<f64>() < mutation {
                    *v = rng.gen();
                }
            }
        }
        out.push(c1);
        if out.len() < count {
            out.push(c2);
        }
    }
    out
}

/// Standard PSO 2007 swarm over the unit cube.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub best_x: Vec<Vec<f64>>,
    pub best_f: Vec<f64>,
    /// `informs[i][j]`: particle `i` informs particle `j`.
    pub informs: Vec<Vec<bool>>,
}

impl Swarm {
    pub fn new(n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen()).collect()).collect();
        let v = x
            .iter()
            .map(|p| p.iter().map(|xi| (rng.gen::<f64>() - xi) / 2.0).collect())
            .collect();
        let mut s = Self {
            best_x: x.clone(),
            x,
            v,
            best_f: vec![f64::NEG_INFINITY; n],
            informs: Vec::new(),
        };
        s.relink(rng);
        s
    }

    pub fn inertia() -> f64 {
        1.0 / (2.0 * 2f64.ln())
    }

    pub fn acceleration() -> f64 {
        0.5 + 2f64.ln()
    }

    pub fn relink(&mut self, rng: &mut impl Rng) {
        let n = self.x.len();
        self.informs = (0..n)
            .map(|i| {
                let mut row = vec![false; n];
                row[i] = true;
                for _ in 0..PSO_INFORMANTS {
                    row[rng.gen_range(0..n)] = true;
                }
                row
            })
            .collect();
    }

    fn neighbourhood_best(&self, j: usize) -> usize {
        let mut best = j;
        for i in 0..self.x.len() {
            if self.informs[i][j] && self.best_f[i] > self.best_f[best] {
                best = i;
            }
        }
        best
    }

    /// Moves the first `n` particles.
    pub fn step(&mut self, n: usize, rng: &mut impl Rng) {
        let (w, c) = (Self::inertia(), Self::acceleration());
        for i in 0..n {
            let g = self.neighbourhood_best(i);
            for d in 0..self.x[i].len() {
                let x = self.x[i][d];
                let mut v = w * self.v[i][d] + rng.gen_range(0.0..c) * (self.best_x[i][d] - x);
                if g != i {
                    v += rng.gen_range(0.0..c) * (self.best_x[g][d] - x);
                }
                let mut nx = x + v;
                if nx < 0.0 {
                    nx = 0.0;
                    v = 0.0;
                } else if nx > 1.0 {
                    nx = 1.0;
                    v = 0.0;
                }
                self.x[i][d] = nx;
                self.v[i][d] = v;
            }
        }
    }

    /// Records fitness of the first `n` particles; true when the swarm's
    /// best improved.
    pub fn observe(&mut self, fitness: &[f64], n: usize) -> bool {
        let before = self.best_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            if fitness[i] > self.best_f[i] {
                self.best_f[i] = fitness[i];
                self.best_x[i] = self.x[i].clone();
            }
        }
        self.best_f.iter().copied().fold(f64::NEG_INFINITY, f64::max) > before
    }
}

/// Gaussian copula with truncated-normal margins on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Copula {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Dimensions with non-zero spread, in the order of `chol`.
    pub free: Vec<usize>,
    /// Lower Cholesky factor of the normal-scores correlation.
    pub chol: Vec<Vec<f64>>,
    pub corr: Vec<Vec<f64>>,
}

impl Copula {
    pub fn fit(selected: &[Vec<f64>]) -> Self {
        let n = selected.len();
        let dim = selected.first().map_or(0, Vec::len);
        let nf = n as f64;
        let mut mean = vec![0.0; dim];
        let mut sd = vec![0.0; dim];
        for j in 0..dim {
            mean[j] = selected.iter().map(|x| x[j]).sum::<f64>() / nf;
            if n > 1 {
                let ss: f64 = selected.iter().map(|x| (x[j] - mean[j]).powi(2)).sum();
                sd[j] = (ss / (nf - 1.0)).sqrt();
            }
        }
        let free: Vec<usize> = (0..dim).filter(|&j| sd[j] > 1e-12).collect();
        let normal = std_normal();
        let scores: Vec<Vec<f64>> = free
            .iter()
            .map(|&j| {
                let col: Vec<f64> = selected.iter().map(|x| x[j]).collect();
                average_ranks(&col)
                    .into_iter()
                    .map(|r| normal.inverse_cdf(r / (nf + 1.0)))
                    .collect()
            })
            .collect();
        let m = free.len();
        let mut corr = vec![vec![0.0; m]; m];
        for a in 0..m {
            corr[a][a] = 1.0;
            for b in 0..a {
                let r = pearson(&scores[a], &scores[b]);
                corr[a][b] = r;
                corr[b][a] = r;
            }
        }
        let chol = (0..8)
            .find_map(|i| {
                let ridge = if i == 0 { 0.0 } else { 1e-6 * 10f64.powi(i) };
                cholesky(&corr, ridge)
            })
            .unwrap_or_else(|| identity(m));
        Self {
            mean,
            sd,
            free,
            chol,
            corr,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut x = self.mean.clone();
        let e: Vec<f64> = (0..self.free.len()).map(|_| rng.sample(StandardNormal)).collect();
        let normal = std_normal();
        for (a, &j) in self.free.iter().enumerate() {
            let z: f64 = (0..=a).map(|b| self.chol[a][b] * e[b]).sum();
            x[j] = truncnorm_quantile(normal.cdf(z), self.mean[j], self.sd[j], 0.0, 1.0);
        }
        x
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn cholesky(a: &[Vec<f64>], ridge: f64) -> Option<Vec<Vec<f64>>> {
    let m = a.len();
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i][j] + if i == j { ridge } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-10 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Random Latin hypercube of `n` points in `[0, 1]^dim`.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    use rand::seq::SliceRandom;
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    pts
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if !(sd > 1e-12) {
        return 0.0;
    }
    let n = std_normal();
    let z = (mean - best) / sd;
    (mean - best) * n.cdf(z) + sd * n.pdf(z)
}

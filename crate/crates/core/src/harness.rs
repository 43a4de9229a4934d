//! Nested cross-validation experiments: an outer stratified split scores the
//! configuration each tuner picks on an inner 3-fold CV of the outer
//! training part.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{balanced_accuracy, tree_size, ConfusionMatrix, DataError, Dataset, FoldPlan};
use crate::space::{builtin_space, Configuration, ParamSpace, SpaceError};
use crate::stats::{wilcoxon_signed_rank, StatsError, WilcoxonResult};
use crate::trees::{self, TreeError, TreeModel};
use crate::tuners::{run_tuner, Objective, OptimizationPath, Technique, TunerError};
use crate::Learner;

const OUTER_STREAM: u64 = 1;
const INNER_STREAM: u64 = 2;
const TUNER_STREAM: u64 = 3;
const FIT_STREAM: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("fitness failed for configuration {config}: {message}")]
    Fitness { config: Configuration, message: String },
    #[error("inner resampling touched outer test rows: {0}")]
    Leakage(String),
    #[error("output {0} already exists")]
    OutputExists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// One arm of an experiment: a tuning technique or the untuned defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Defaults,
    Tuned(Technique),
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Defaults => "defaults",
            Arm::Tuned(t) => t.as_str(),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = TunerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("defaults") {
            Ok(Arm::Defaults)
        } else {
            s.parse().map(Arm::Tuned)
        }
    }
}

impl Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// `openml:<id>` or a file path.
    pub dataset: String,
    pub learner: Learner,
    pub techniques: Vec<Technique>,
    #[serde(default = "yes")]
    pub include_defaults: bool,
    #[serde(default = "outer_default")]
    pub outer_k: usize,
    #[serde(default = "inner_default")]
    pub inner_k: usize,
    #[serde(default = "budget_default")]
    pub budget: usize,
    pub seeds: Vec<u64>,
}

fn yes() -> bool {
    true
}
fn outer_default() -> usize {
    10
}
fn inner_default() -> usize {
    3
}
fn budget_default() -> usize {
    900
}

impl ExperimentPlan {
    /// Full-scale plan: 30 repetitions.
    pub fn new(dataset: impl Into<String>, learner: Learner, techniques: Vec<Technique>) -> Self {
        Self {
            dataset: dataset.into(),
            learner,
            techniques,
            include_defaults: true,
            outer_k: 10,
            inner_k: 3,
            budget: 900,
            seeds: (1..=30).collect(),
        }
    }

    /// Desk-scale plan: 5 repetitions.
    pub fn desk(dataset: impl Into<String>, learner: Learner, techniques: Vec<Technique>) -> Self {
        Self {
            seeds: (1..=5).collect(),
            ..Self::new(dataset, learner, techniques)
        }
    }

    pub fn arms(&self) -> Vec<Arm> {
        let mut arms: Vec<Arm> = Vec::new();
        if self.include_defaults {
            arms.push(Arm::Defaults);
        }
        for &t in &self.techniques {
            if !arms.contains(&Arm::Tuned(t)) {
                arms.push(Arm::Tuned(t));
            }
        }
        arms
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Plan(m));
        if self.outer_k < 2 || self.inner_k < 2 {
            return bad(format!("fold counts must be at least 2 (outer {}, inner {})", self.outer_k, self.inner_k));
        }
        if !self.techniques.is_empty() && self.budget < crate::tuners::POPULATION {
            return Err(TunerError::BudgetBelowPopulation {
                budget: self.budget,
                population: crate::tuners::POPULATION,
            }
            .into());
        }
        if self.seeds.is_empty() {
            return bad("no repetition seeds".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return bad("repetition seeds must be distinct".into());
        }
        if self.arms().is_empty() {
            return bad("no arms to run".into());
        }
        Ok(())
    }

    pub fn experiment_id(&self, dataset_name: &str) -> String {
        format!("{}/{}", dataset_name, self.learner)
    }
}

/// Mean inner-CV balanced accuracy of a learner on a fixed row subset.
/// Instance `i` is the `i`-th seeded stratified split of those rows; plain
/// evaluation uses instance 0.
pub struct InnerCv<'a> {
    data: &'a Dataset,
    learner: Learner,
    rows: Vec<usize>,
    k: usize,
    seed: u64,
    fit_seed: u64,
    touched: Vec<AtomicBool>,
    failure: Mutex<Option<(Configuration, String)>>,
}

impl<'a> InnerCv<'a> {
    pub fn new(data: &'a Dataset, learner: Learner, rows: Vec<usize>, k: usize, seed: u64, fit_seed: u64) -> Self {
        Self {
            data,
            learner,
            rows,
            k,
            seed,
            fit_seed,
            touched: (0..data.len()).map(|_| AtomicBool::new(false)).collect(),
            failure: Mutex::new(None),
        }
    }

    pub fn plan(&self, instance: usize) -> Result<FoldPlan, DataError> {
        let labels: Vec<usize> = self.rows.iter().map(|&r| self.data.label(r)).collect();
        let seed = crate::seeds::derive(self.seed, &[instance as u64]);
        FoldPlan::stratified(&labels, self.data.class_names(), self.k, seed, false)
    }

    /// Fitness on resampling `instance`, or the first error met.
    pub fn try_fitness(&self, config: &Configuration, instance: usize) -> Result<f64, String> {
        let plan = self.plan(instance).map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for fold in 0..self.k {
            let (train, test) = plan.split(&self.rows, fold);
            for &r in train.iter().chain(&test) {
                self.touched[r].store(true, Ordering::Relaxed);
            }
            let model = trees::fit(self.learner, self.data, &train, config, self.fit_seed).map_err(|e| e.to_string())?;
            total += score(&model, self.data, &test).map_err(|e| e.to_string())?;
        }
        Ok(total / self.k as f64)
    }

    fn record(&self, config: &Configuration, result: Result<f64, String>) -> f64 {
        match result {
            Ok(f) => f,
            Err(message) => {
                let mut slot = self.failure.lock().expect("failure slot");
                if slot.is_none() {
                    *slot = Some((config.clone(), message));
                }
                0.0
            }
        }
    }

    pub fn failure(&self) -> Option<(Configuration, String)> {
        self.failure.lock().expect("failure slot").clone()
    }

    /// Every dataset row any inner split has used, ascending.
    pub fn touched_rows(&self) -> Vec<usize> {
        (0..self.touched.len()).filter(|&r| self.touched[r].load(Ordering::Relaxed)).collect()
    }
}

impl Objective for InnerCv<'_> {
    fn evaluate(&self, config: &Configuration) -> f64 {
        self.evaluate_on(config, 0)
    }

    fn evaluate_on(&self, config: &Configuration, instance: usize) -> f64 {
        let r = self.try_fitness(config, instance);
        self.record(config, r)
    }
}

/// Balanced accuracy of `model` on `rows`.
pub fn score(model: &TreeModel, data: &Dataset, rows: &[usize]) -> Result<f64, HarnessError> {
    let pred = model.predict_rows(data, rows)?;
    let mut cm = ConfusionMatrix::new(data.n_classes());
    for (&r, p) in rows.iter().zip(pred) {
        cm.record(data.label(r), p);
    }
    Ok(balanced_accuracy(&cm)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub arm: Arm,
    pub seed: u64,
    pub outer_fold: usize,
    pub config: Configuration,
    /// Fitness the tuner reported for `config`; absent for defaults.
    pub inner_fitness: Option<f64>,
    pub test_bac: f64,
    pub tree_size: usize,
    pub evaluations: usize,
    pub tuning_us: u64,
    pub training_us: u64,
    pub testing_us: u64,
}

/// Rows any inner split of one cell touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerAudit {
    pub arm: Arm,
    pub seed: u64,
    pub outer_fold: usize,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPath {
    pub arm: Arm,
    pub seed: u64,
    pub outer_fold: usize,
    pub path: OptimizationPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub dataset_name: String,
    pub space: ParamSpace,
    pub rows: Vec<ReportRow>,
    /// Outer plan per repetition seed, in plan order.
    pub outer_plans: Vec<(u64, FoldPlan)>,
    pub paths: Vec<CellPath>,
    pub audit: Vec<InnerAudit>,
}

impl ExperimentReport {
    pub fn rows_for(&self, arm: Arm) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.arm == arm)
    }

    /// Mean outer-test BAC per repetition seed, in plan seed order.
    pub fn seed_means(&self, arm: Arm) -> Vec<f64> {
        self.plan
            .seeds
            .iter()
            .map(|&s| {
                let v: Vec<f64> = self.rows_for(arm).filter(|r| r.seed == s).map(|r| r.test_bac).collect();
                v.iter().sum::<f64>() / v.len().max(1) as f64
            })
            .collect()
    }

    pub fn mean_bac(&self, arm: Arm) -> f64 {
        let v: Vec<f64> = self.rows_for(arm).map(|r| r.test_bac).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    /// Wilcoxon test of each tuned arm against defaults over seed means.
    pub fn compare_to_defaults(&self, alpha: f64) -> Result<Vec<(Arm, WilcoxonResult)>, HarnessError> {
        let base = self.seed_means(Arm::Defaults);
        self.plan
            .arms()
            .into_iter()
            .filter(|a| *a != Arm::Defaults)
            .map(|a| Ok((a, wilcoxon_signed_rank(&self.seed_means(a), &base, alpha)?)))
            .collect()
    }

    /// Checks that every row an inner split touched lies in the outer
    /// training part of its fold.
    pub fn check_leakage(&self) -> Result<(), HarnessError> {
        for a in &self.audit {
            let Some((_, plan)) = self.outer_plans.iter().find(|(s, _)| *s == a.seed) else {
                return Err(HarnessError::Leakage(format!("no outer plan for seed {}", a.seed)));
            };
            if let Some(r) = a.rows.iter().find(|&&r| plan.assignment[r] == a.outer_fold) {
                return Err(HarnessError::Leakage(format!(
                    "{} seed {} fold {} used row {r}",
                    a.arm, a.seed, a.outer_fold
                )));
            }
        }
        Ok(())
    }
}

struct CellOutcome {
    row: ReportRow,
    path: Option<OptimizationPath>,
    audit: InnerAudit,
}

fn micros(d: Duration) -> u64 {
    d.as_micros() as u64
}

pub fn run_experiment(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentReport, HarnessError> {
    plan.validate()?;
    let space = builtin_space(plan.learner, data.n_features().max(1))?;
    let outer_plans: Vec<(u64, FoldPlan)> = plan
        .seeds
        .iter()
        .map(|&s| {
            let seed = crate::seeds::derive(s, &[OUTER_STREAM]);
            FoldPlan::stratified(data.labels(), data.class_names(), plan.outer_k, seed, true).map(|p| (s, p))
        })
        .collect::<Result<_, _>>()?;
    let all_rows: Vec<usize> = (0..data.len()).collect();
    let cells: Vec<(Arm, usize, usize)> = plan
        .arms()
        .into_iter()
        .flat_map(|a| (0..plan.seeds.len()).flat_map(move |s| (0..plan.outer_k).map(move |f| (a, s, f))))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(arm, si, fold)| {
            let (seed, outer) = &outer_plans[si];
            let (train, test) = outer.split(&all_rows, fold);
            run_cell(plan, data, &space, arm, *seed, fold, train, test)
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut paths = Vec::new();
    let mut audit = Vec::new();
    for o in outcomes {
        if let Some(p) = o.path {
            paths.push(CellPath {
                arm: o.row.arm,
                seed: o.row.seed,
                outer_fold: o.row.outer_fold,
                path: p,
            });
        }
        audit.push(o.audit);
        rows.push(o.row);
    }
    let report = ExperimentReport {
        plan: plan.clone(),
        dataset_name: data.name.clone(),
        space,
        rows,
        outer_plans,
        paths,
        audit,
    };
    report.check_leakage()?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    plan: &ExperimentPlan,
    data: &Dataset,
    space: &ParamSpace,
    arm: Arm,
    seed: u64,
    fold: usize,
    train: Vec<usize>,
    test: Vec<usize>,
) -> Result<CellOutcome, HarnessError> {
    let fit_seed = crate::seeds::derive(seed, &[FIT_STREAM, fold as u64]);
    let inner_seed = crate::seeds::derive(seed, &[INNER_STREAM, fold as u64]);
    let tuner_seed = crate::seeds::derive(seed, &[TUNER_STREAM, fold as u64]);
    let objective = InnerCv::new(data, plan.learner, train.clone(), plan.inner_k, inner_seed, fit_seed);
    let start = Instant::now();
    let (config, inner_fitness, evaluations, path) = match arm {
        Arm::Defaults => (space.defaults(), None, 0, None),
        Arm::Tuned(t) => {
            let r = run_tuner(t, space, &objective, plan.budget, tuner_seed)?;
            if let Some((config, message)) = objective.failure() {
                return Err(HarnessError::Fitness { config, message });
            }
            (r.best, Some(r.best_fitness), r.budget.consumed, Some(r.path))
        }
    };
    let tuning = if arm == Arm::Defaults { Duration::ZERO } else { start.elapsed() };
    let start = Instant::now();
    let model = trees::fit(plan.learner, data, &train, &config, fit_seed)?;
    let training = start.elapsed();
    let start = Instant::now();
    let test_bac = score(&model, data, &test)?;
    let testing = start.elapsed();
    Ok(CellOutcome {
        row: ReportRow {
            arm,
            seed,
            outer_fold: fold,
            config,
            inner_fitness,
            test_bac,
            tree_size: tree_size(&model),
            evaluations,
            tuning_us: micros(tuning),
            training_us: micros(training),
            testing_us: micros(testing),
        },
        path,
        audit: InnerAudit {
            arm,
            seed,
            outer_fold: fold,
            rows: objective.touched_rows(),
        },
    })
}

/// Smallest 1-based trial index whose running best is within `epsilon` of
/// the final best; `None` for an empty path.
pub fn convergence_stats(path: &OptimizationPath, epsilon: f64) -> Option<usize> {
    let best = path.cumulative_best();
    let last = *best.last()?;
    best.iter().position(|&b| b >= last - epsilon).map(|i| i + 1)
}

/// One line of a trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment_id: String,
    pub technique: Technique,
    pub seed: u64,
    pub outer_fold: usize,
    pub trial_index: usize,
    pub config: Configuration,
    pub inner_fitness: f64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<usize>,
}

/// One line of a report log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub experiment_id: String,
    #[serde(flatten)]
    pub row: ReportRow,
}

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const PLAN_FILE: &str = "plan.json";
pub const SPACE_FILE: &str = "space.json";

/// `name` with every character outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn dir_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "dataset".into()
    } else {
        s
    }
}

/// Directory of one arm and repetition under `out`.
pub fn cell_dir(out: &Path, dataset: &str, learner: Learner, arm: Arm, seed: u64) -> PathBuf {
    out.join(dir_name(dataset)).join(learner.as_str()).join(arm.as_str()).join(format!("seed{seed}"))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the report under `<out>/<dataset>/<learner>/<arm>/seed<k>/`.
/// Refuses to touch existing files unless `force`.
pub fn write_report(report: &ExperimentReport, out: &Path, force: bool) -> Result<Vec<PathBuf>, HarnessError> {
    let learner = report.plan.learner;
    let id = report.plan.experiment_id(&report.dataset_name);
    let root = out.join(dir_name(&report.dataset_name)).join(learner.as_str());
    if !force {
        for arm in report.plan.arms() {
            for &s in &report.plan.seeds {
                let dir = cell_dir(out, &report.dataset_name, learner, arm, s);
                if dir.exists() {
                    return Err(HarnessError::OutputExists(dir));
                }
            }
        }
    }
    let mut written = Vec::new();
    for arm in report.plan.arms() {
        for &s in &report.plan.seeds {
            let dir = cell_dir(out, &report.dataset_name, learner, arm, s);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let rpath = dir.join(REPORT_FILE);
            let mut w = BufWriter::new(fs::File::create(&rpath).map_err(io_err(&rpath))?);
            for row in report.rows.iter().filter(|r| r.arm == arm && r.seed == s) {
                let rec = RowRecord {
                    experiment_id: id.clone(),
                    row: row.clone(),
                };
                write_json_line(&mut w, &rec, &rpath)?;
            }
            w.flush().map_err(io_err(&rpath))?;
            written.push(rpath);
            if let Arm::Tuned(t) = arm {
                let tpath = dir.join(TRIALS_FILE);
                let mut w = BufWriter::new(fs::File::create(&tpath).map_err(io_err(&tpath))?);
                for cp in report.paths.iter().filter(|p| p.arm == arm && p.seed == s) {
                    for trial in &cp.path.trials {
                        let rec = TrialRecord {
                            experiment_id: id.clone(),
                            technique: t,
                            seed: s,
                            outer_fold: cp.outer_fold,
                            trial_index: trial.index,
                            config: trial.config.clone(),
                            inner_fitness: trial.fitness,
                            wall_ms: trial.wall.as_micros() as f64 / 1000.0,
                            instance: trial.instance,
                        };
                        write_json_line(&mut w, &rec, &tpath)?;
                    }
                }
                w.flush().map_err(io_err(&tpath))?;
                written.push(tpath);
            }
        }
    }
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let ppath = root.join(PLAN_FILE);
    let text = serde_json::to_string_pretty(&report.plan).map_err(|source| HarnessError::Json {
        path: ppath.clone(),
        source,
    })?;
    fs::write(&ppath, text).map_err(io_err(&ppath))?;
    written.push(ppath);
    let spath = root.join(SPACE_FILE);
    let text = serde_json::to_string_pretty(&report.space).map_err(|source| HarnessError::Json {
        path: spath.clone(),
        source,
    })?;
    fs::write(&spath, text).map_err(io_err(&spath))?;
    written.push(spath);
    let fpath = root.join("folds.json");
    let text = serde_json::to_string(&report.outer_plans).map_err(|source| HarnessError::Json {
        path: fpath.clone(),
        source,
    })?;
    fs::write(&fpath, text).map_err(io_err(&fpath))?;
    written.push(fpath);
    Ok(written)
}

fn write_json_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<(), HarnessError> {
    serde_json::to_writer(&mut *w, value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?);
    }
    Ok(out)
}

/// The space file written for the experiment a trial log belongs to.
pub fn space_for_log(trials: &Path) -> Result<ParamSpace, HarnessError> {
    let path = trials
        .ancestors()
        .nth(3)
        .map(|d| d.join(SPACE_FILE))
        .unwrap_or_else(|| PathBuf::from(SPACE_FILE));
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path, source })
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    read_lines(path)
}

pub fn read_rows(path: &Path) -> Result<Vec<RowRecord>, HarnessError> {
    read_lines(path)
}

/// Every file named `name` below `root`, sorted.
pub fn find_files(root: &Path, name: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    if root.is_file() {
        out.push(root.to_path_buf());
        return Ok(out);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let p = entry.map_err(io_err(&dir))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().and_then(|n| n.to_str()) == Some(name) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

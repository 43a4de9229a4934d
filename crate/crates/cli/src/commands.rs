use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use treetune::complexity::{advise, profile, Advice, ComplexityProfile};
use treetune::data::FeatureKind;
use treetune::harness::{
    self, cell_dir, find_files, read_rows, read_trials, run_experiment, space_for_log, write_report, Arm,
    ExperimentPlan, ReportRow, REPORT_FILE, TRIALS_FILE,
};
use treetune::importance::{fit_forest, variance_decomposition};
use treetune::stats::{cd_groups, friedman_test, nemenyi_cd, wilcoxon_signed_rank, RankMatrix, WilcoxonResult};
use treetune::trees::{self, Split};
use treetune::tuners::{Technique, Trial};
use treetune::{builtin_space, Learner, ParamSpace, TreeModel};

use crate::error::CliError;
use crate::{source, CompareArgs, ComplexityArgs, FitArgs, ImportanceArgs, InspectArgs, TuneArgs};

/// Parses `1..5`, `1..=5` (both inclusive) or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::config("plan", format!("bad seed list {text:?}"));
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_learner(s: &str) -> Result<Learner, CliError> {
    s.parse().map_err(|e: treetune::space::SpaceError| CliError::config("space", e.to_string()))
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime("io", e.to_string()))?;
    println!("{text}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct ArmSummary {
    arm: Arm,
    cells: usize,
    mean_bac: f64,
    sd_bac: f64,
    mean_tree_size: f64,
    mean_tuning_s: f64,
    mean_training_s: f64,
    mean_testing_s: f64,
    evaluations: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn summarize<'a>(arm: Arm, rows: impl Iterator<Item = &'a ReportRow>) -> ArmSummary {
    let rows: Vec<&ReportRow> = rows.filter(|r| r.arm == arm).collect();
    let col = |f: &dyn Fn(&ReportRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let bac = col(&|r| r.test_bac);
    ArmSummary {
        arm,
        cells: rows.len(),
        mean_bac: mean(&bac),
        sd_bac: sd(&bac),
        mean_tree_size: mean(&col(&|r| r.tree_size as f64)),
        mean_tuning_s: mean(&col(&|r| r.tuning_us as f64 / 1e6)),
        mean_training_s: mean(&col(&|r| r.training_us as f64 / 1e6)),
        mean_testing_s: mean(&col(&|r| r.testing_us as f64 / 1e6)),
        evaluations: rows.iter().map(|r| r.evaluations).sum(),
    }
}

fn print_arms(arms: &[ArmSummary]) {
    println!(
        "{:<10} {:>6} {:>9} {:>8} {:>10} {:>10} {:>11}",
        "arm", "cells", "test_bac", "sd", "tree_size", "tuning_s", "evaluations"
    );
    for a in arms {
        println!(
            "{:<10} {:>6} {:>9.4} {:>8.4} {:>10.1} {:>10.3} {:>11}",
            a.arm.as_str(),
            a.cells,
            a.mean_bac,
            a.sd_bac,
            a.mean_tree_size,
            a.mean_tuning_s,
            a.evaluations
        );
    }
}

#[derive(Debug, Serialize)]
struct VersusDefaults {
    arm: Arm,
    #[serde(flatten)]
    test: WilcoxonResult,
}

fn print_versus(v: &[VersusDefaults]) {
    for w in v {
        println!(
            "{} vs defaults: W+={} n={} p={:.4} {}",
            w.arm,
            w.test.statistic,
            w.test.n_used,
            w.test.p_value,
            serde_json::to_value(w.test.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        );
    }
}

pub fn tune(a: &TuneArgs, json: bool) -> Result<(), CliError> {
    let learner = parse_learner(&a.learner)?;
    let mut techniques: Vec<Technique> = Vec::new();
    let mut include_defaults = false;
    for s in &a.arms {
        match s.parse::<Arm>().map_err(|e| CliError::config("tuner", e.to_string()))? {
            Arm::Defaults => include_defaults = true,
            Arm::Tuned(t) if !techniques.contains(&t) => techniques.push(t),
            Arm::Tuned(_) => {}
        }
    }
    let seeds = match &a.seeds {
        Some(s) => parse_seeds(s)?,
        None if a.full => (1..=30).collect(),
        None => (1..=5).collect(),
    };
    let plan = ExperimentPlan {
        dataset: a.data.dataset.clone(),
        learner,
        techniques,
        include_defaults,
        outer_k: a.outer_k,
        inner_k: a.inner_k,
        budget: a.budget,
        seeds,
    };
    plan.validate()?;
    let data = source::load(&a.data)?;
    if !a.force {
        for arm in plan.arms() {
            for &s in &plan.seeds {
                let dir = cell_dir(&a.out, &data.name, learner, arm, s);
                if dir.exists() {
                    return Err(CliError::exists(&dir));
                }
            }
        }
    }
    let report = run_experiment(&plan, &data)?;
    let files = write_report(&report, &a.out, a.force)?;
    let arms: Vec<ArmSummary> = plan.arms().into_iter().map(|arm| summarize(arm, report.rows.iter())).collect();
    let versus: Vec<VersusDefaults> = if include_defaults {
        report
            .compare_to_defaults(0.05)?
            .into_iter()
            .map(|(arm, test)| VersusDefaults { arm, test })
            .collect()
    } else {
        Vec::new()
    };
    let id = plan.experiment_id(&report.dataset_name);
    if json {
        return print_json(&json!({
            "experiment": id,
            "rows": report.rows.len(),
            "arms": arms,
            "versus_defaults": versus,
            "files": files,
        }));
    }
    println!(
        "experiment {id}: {} instances, {} classes, {}x{} folds, budget {}, {} seeds",
        data.len(),
        data.n_classes(),
        plan.outer_k,
        plan.inner_k,
        plan.budget,
        plan.seeds.len()
    );
    print_arms(&arms);
    print_versus(&versus);
    println!("{} report rows, {} files under {}", report.rows.len(), files.len(), a.out.display());
    Ok(())
}

fn collect_files(paths: &[PathBuf], name: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = BTreeSet::new();
    for p in paths {
        if !p.exists() {
            return Err(CliError::config("io", format!("{} does not exist", p.display())));
        }
        out.extend(find_files(p, name)?);
    }
    if out.is_empty() {
        return Err(CliError::config("io", format!("no {name} found")));
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Serialize)]
struct ExperimentComparison {
    experiment: String,
    arms: Vec<ArmSummary>,
    versus_defaults: Vec<VersusDefaults>,
}

#[derive(Debug, Serialize)]
struct CdEntry {
    technique: String,
    mean_rank: f64,
    groups: Vec<usize>,
}

pub fn compare(a: &CompareArgs, json: bool) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::config("stats", format!("alpha {} outside (0, 1)", a.alpha)));
    }
    let mut by_exp: BTreeMap<String, Vec<ReportRow>> = BTreeMap::new();
    for f in collect_files(&a.reports, REPORT_FILE)? {
        for rec in read_rows(&f)? {
            by_exp.entry(rec.experiment_id).or_default().push(rec.row);
        }
    }
    let mut experiments = Vec::new();
    for (id, rows) in &by_exp {
        let arms: BTreeSet<Arm> = rows.iter().map(|r| r.arm).collect();
        let summaries: Vec<ArmSummary> = arms.iter().map(|&arm| summarize(arm, rows.iter())).collect();
        let mut versus = Vec::new();
        if arms.contains(&Arm::Defaults) {
            let base = seed_means(rows, Arm::Defaults);
            for &arm in arms.iter().filter(|a| **a != Arm::Defaults) {
                let other = seed_means(rows, arm);
                let seeds: Vec<u64> = base.keys().filter(|s| other.contains_key(s)).copied().collect();
                let x: Vec<f64> = seeds.iter().map(|s| other[s]).collect();
                let y: Vec<f64> = seeds.iter().map(|s| base[s]).collect();
                let test = wilcoxon_signed_rank(&x, &y, a.alpha).map_err(|e| CliError::runtime("stats", e.to_string()))?;
                versus.push(VersusDefaults { arm, test });
            }
        }
        experiments.push(ExperimentComparison {
            experiment: id.clone(),
            arms: summaries,
            versus_defaults: versus,
        });
    }

    let common: Vec<Arm> = experiments
        .iter()
        .map(|e| e.arms.iter().map(|s| s.arm).collect::<BTreeSet<_>>())
        .reduce(|x, y| &x & &y)
        .unwrap_or_default()
        .into_iter()
        .collect();
    let mut across = serde_json::Value::Null;
    let mut text = Vec::new();
    if experiments.len() >= 2 && common.len() >= 2 {
        let values: Vec<Vec<f64>> = common
            .iter()
            .map(|&arm| {
                experiments
                    .iter()
                    .map(|e| e.arms.iter().find(|s| s.arm == arm).map_or(0.0, |s| s.mean_bac))
                    .collect()
            })
            .collect();
        let names: Vec<String> = common.iter().map(|a| a.to_string()).collect();
        let datasets: Vec<String> = experiments.iter().map(|e| e.experiment.clone()).collect();
        let m = RankMatrix::new(names.clone(), datasets, values).map_err(|e| CliError::runtime("stats", e.to_string()))?;
        let ranks = m.ranks();
        let mean_ranks = m.mean_ranks();
        let friedman = friedman_test(&m, a.alpha).ok();
        let cd = nemenyi_cd(common.len(), m.datasets.len(), a.alpha);
        let groups = cd.as_ref().map(|&cd| cd_groups(&mean_ranks, cd)).unwrap_or_default();
        let diagram: Vec<CdEntry> = names
            .iter()
            .enumerate()
            .map(|(t, n)| CdEntry {
                technique: n.clone(),
                mean_rank: mean_ranks[t],
                groups: groups.iter().enumerate().filter(|(_, g)| g.contains(&t)).map(|(i, _)| i).collect(),
            })
            .collect();
        text.push(format!("{:<10} {}", "rank", m.datasets.join(" ")));
        for (t, n) in names.iter().enumerate() {
            let cells: Vec<String> = ranks[t].iter().map(|r| format!("{r:.1}")).collect();
            text.push(format!("{n:<10} {}  mean {:.3}", cells.join(" "), mean_ranks[t]));
        }
        match &friedman {
            Some(f) => text.push(format!("friedman: chi2={:.3} p={:.4} reject={}", f.statistic, f.p_value, f.reject)),
            None => text.push("friedman: needs at least 3 arms".into()),
        }
        match &cd {
            Ok(cd) => {
                text.push(format!("nemenyi cd={cd:.3} (alpha {})", a.alpha));
                for e in &diagram {
                    let g: Vec<String> = e.groups.iter().map(|g| g.to_string()).collect();
                    text.push(format!("  {:<10} {:.3} groups {}", e.technique, e.mean_rank, g.join(",")));
                }
            }
            Err(e) => text.push(format!("nemenyi: {e}")),
        }
        across = json!({
            "rank_matrix": m,
            "ranks": ranks,
            "mean_ranks": mean_ranks,
            "friedman": friedman,
            "critical_difference": cd.as_ref().ok(),
            "cd_diagram": diagram,
        });
    }
    if json {
        return print_json(&json!({ "alpha": a.alpha, "experiments": experiments, "across": across }));
    }
    for e in &experiments {
        println!("# {}", e.experiment);
        print_arms(&e.arms);
        print_versus(&e.versus_defaults);
    }
    if !text.is_empty() {
        println!("# across {} experiments", experiments.len());
        for line in text {
            println!("{line}");
        }
    }
    Ok(())
}

fn seed_means(rows: &[ReportRow], arm: Arm) -> BTreeMap<u64, f64> {
    let mut by: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.arm == arm) {
        by.entry(r.seed).or_default().push(r.test_bac);
    }
    by.into_iter().map(|(s, v)| (s, mean(&v))).collect()
}

#[derive(Debug, Serialize)]
struct ImportanceRow {
    experiment: String,
    technique: Technique,
    trials: usize,
    total_variance: f64,
    entries: Vec<(String, f64)>,
}

pub fn importance(a: &ImportanceArgs, json: bool) -> Result<(), CliError> {
    if a.order == 0 {
        return Err(CliError::config("importance", "order must be at least 1"));
    }
    let only: Option<Technique> = a
        .technique
        .as_deref()
        .map(|t| t.parse().map_err(|e: treetune::tuners::TunerError| CliError::config("tuner", e.to_string())))
        .transpose()?;
    let fixed_space: Option<ParamSpace> = match &a.space {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::config("space", format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::config("space", format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut groups: BTreeMap<(String, Technique), (ParamSpace, Vec<Trial>)> = BTreeMap::new();
    for f in collect_files(&a.logs, TRIALS_FILE)? {
        let records = read_trials(&f)?;
        let space = match &fixed_space {
            Some(s) => s.clone(),
            None => space_for_log(&f)?,
        };
        for r in records.into_iter().filter(|r| only.map_or(true, |t| t == r.technique)) {
            let entry = groups
                .entry((r.experiment_id.clone(), r.technique))
                .or_insert_with(|| (space.clone(), Vec::new()));
            let index = entry.1.len() + 1;
            entry.1.push(Trial {
                index,
                config: r.config,
                fitness: r.inner_fitness,
                wall: Duration::from_secs_f64(r.wall_ms.max(0.0) / 1000.0),
                instance: r.instance,
            });
        }
    }
    let mut out = Vec::new();
    for ((experiment, technique), (space, trials)) in groups {
        let forest = fit_forest(&space, &trials, a.trees, a.seed)
            .map_err(|e| CliError::runtime("importance", format!("{experiment} {technique}: {e}")))?;
        let names: Vec<String> = space.params().iter().map(|p| p.name.clone()).collect();
        let report = variance_decomposition(&forest, &names, a.order, a.filter);
        out.push(ImportanceRow {
            experiment,
            technique,
            trials: trials.len(),
            total_variance: report.total_variance,
            entries: report.visible().map(|e| (e.params.join(":"), e.fraction)).collect(),
        });
    }
    if json {
        let rows: Vec<serde_json::Value> = out
            .iter()
            .flat_map(|r| {
                r.entries.iter().map(move |(s, f)| {
                    json!({"experiment": r.experiment, "technique": r.technique, "subset": s, "fraction": f})
                })
            })
            .collect();
        return print_json(&json!({ "filter": a.filter, "order": a.order, "groups": out, "table": rows }));
    }
    println!("experiment\ttechnique\tsubset\tfraction");
    for r in &out {
        for (s, f) in &r.entries {
            println!("{}\t{}\t{s}\t{f:.4}", r.experiment, r.technique);
        }
    }
    Ok(())
}

pub fn complexity(a: &ComplexityArgs, json: bool) -> Result<(), CliError> {
    let learners: Vec<Learner> = match &a.learner {
        Some(l) => vec![parse_learner(l)?],
        None => Learner::ALL.to_vec(),
    };
    let data = source::load(&a.data)?;
    let p: ComplexityProfile = profile(&data).map_err(|e| CliError::data("complexity", e.to_string()))?;
    let advice: Vec<Advice> = learners.iter().map(|&l| advise(&p, l)).collect();
    if json {
        return print_json(&json!({ "dataset": data.name, "profile": p, "advice": advice }));
    }
    println!("dataset {} ({} instances, {} classes)", data.name, data.len(), data.n_classes());
    for (name, v) in [("f1", p.f1), ("f3", p.f3), ("f4", p.f4), ("n1", p.n1), ("n2", p.n2), ("n4", p.n4), ("l2", p.l2)] {
        println!("{name:<4} {v:.4}");
    }
    for f in &p.flags {
        println!("note: {f}");
    }
    for a in &advice {
        println!("{}: {} [{}]", a.learner, a.verdict, a.fired.join("; "));
    }
    Ok(())
}

/// A fitted tree with the names it needs for printing.
#[derive(Debug, Serialize, Deserialize)]
pub struct FittedTree {
    pub dataset: String,
    pub features: Vec<String>,
    /// Levels of categorical features; empty for numeric ones.
    pub levels: Vec<Vec<String>>,
    pub classes: Vec<String>,
    pub config: treetune::Configuration,
    pub model: TreeModel,
}

pub fn fit(a: &FitArgs, json: bool) -> Result<(), CliError> {
    let learner = parse_learner(&a.learner)?;
    if let Some(out) = &a.out {
        if out.exists() && !a.force {
            return Err(CliError::exists(out));
        }
    }
    let data = source::load(&a.data)?;
    let space = builtin_space(learner, data.n_features().max(1)).map_err(|e| CliError::config("space", e.to_string()))?;
    let config = space
        .parse_assignments(&a.assignments)
        .map_err(|e| CliError::config("space", e.to_string()))?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let model = trees::fit(learner, &data, &rows, &config, a.seed).map_err(|e| CliError::runtime("trees", e.to_string()))?;
    let bac = harness::score(&model, &data, &rows)?;
    let fitted = FittedTree {
        dataset: data.name.clone(),
        features: data.features().iter().map(|f| f.name.clone()).collect(),
        levels: data
            .features()
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Categorical { levels } => levels.clone(),
                FeatureKind::Numeric => Vec::new(),
            })
            .collect(),
        classes: data.class_names().to_vec(),
        config,
        model,
    };
    let text = serde_json::to_string_pretty(&fitted).map_err(|e| CliError::runtime("io", e.to_string()))?;
    match &a.out {
        Some(out) => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::runtime("io", format!("{}: {e}", dir.display())))?;
            }
            fs::write(out, &text).map_err(|e| CliError::runtime("io", format!("{}: {e}", out.display())))?;
        }
        None if json => println!("{text}"),
        None => {}
    }
    if json {
        if a.out.is_some() {
            print_json(&summary_json(&fitted, Some(bac)))?;
        }
        return Ok(());
    }
    println!(
        "{} on {}: {} nodes, {} leaves, depth {}, training bac {:.4}",
        learner,
        fitted.dataset,
        fitted.model.node_count(),
        fitted.model.leaf_count(),
        fitted.model.depth(),
        bac
    );
    println!("config {}", fitted.config);
    if a.out.is_none() {
        print!("{}", render(&fitted));
    }
    Ok(())
}

fn summary_json(t: &FittedTree, training_bac: Option<f64>) -> serde_json::Value {
    json!({
        "dataset": t.dataset,
        "learner": t.model.learner,
        "config": t.config,
        "nodes": t.model.node_count(),
        "leaves": t.model.leaf_count(),
        "depth": t.model.depth(),
        "training_bac": training_bac,
    })
}

pub fn inspect(a: &InspectArgs, json: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.model)
        .map_err(|e| CliError::config("io", format!("{}: {e}", a.model.display())))?;
    let fitted = match serde_json::from_str::<FittedTree>(&text) {
        Ok(f) => f,
        Err(_) => {
            let model = TreeModel::from_json(&text).map_err(|e| CliError::data("trees", e.to_string()))?;
            FittedTree {
                dataset: String::new(),
                features: (0..model.n_features).map(|j| format!("x{j}")).collect(),
                levels: vec![Vec::new(); model.n_features],
                classes: (0..model.n_classes).map(|c| format!("class{c}")).collect(),
                config: treetune::Configuration::new(),
                model,
            }
        }
    };
    if json {
        return print_json(&summary_json(&fitted, None));
    }
    println!(
        "{} tree: {} nodes, {} leaves, depth {}",
        fitted.model.learner,
        fitted.model.node_count(),
        fitted.model.leaf_count(),
        fitted.model.depth()
    );
    if !fitted.config.is_empty() {
        println!("config {}", fitted.config);
    }
    print!("{}", render(&fitted));
    Ok(())
}

/// Indented preorder listing of the tree.
pub fn render(t: &FittedTree) -> String {
    let mut out = String::new();
    walk(t, t.model.root, 0, None, &mut out);
    out
}

fn walk(t: &FittedTree, i: usize, depth: usize, edge: Option<String>, out: &mut String) {
    let node = &t.model.nodes()[i];
    let pad = "|   ".repeat(depth.saturating_sub(1));
    let head = match &edge {
        Some(e) => format!("{pad}{e}"),
        None => "root".to_string(),
    };
    if node.is_leaf() {
        let best = (0..node.class_counts.len()).max_by_key(|&c| (node.class_counts[c], std::cmp::Reverse(c))).unwrap_or(0);
        let class = t.classes.get(best).cloned().unwrap_or_else(|| best.to_string());
        let counts: Vec<String> = node.class_counts.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{head}: {class} ({})\n", counts.join("/")));
        return;
    }
    if edge.is_some() {
        out.push_str(&format!("{head}\n"));
    } else {
        out.push_str("root\n");
    }
    let split = node.split.as_ref().expect("internal node has a split");
    let j = split.feature();
    let name = t.features.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
    for (c, &child) in node.children.iter().enumerate() {
        let label = match split {
            Split::Numeric { threshold, .. } => {
                format!("{name} {} {threshold}", if c == 0 { "<" } else { ">=" })
            }
            Split::Categorical { branch, .. } => {
                let levels: Vec<String> = branch
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b == c)
                    .map(|(l, _)| t.levels.get(j).and_then(|v| v.get(l)).cloned().unwrap_or_else(|| l.to_string()))
                    .collect();
                format!("{name} in {{{}}}", levels.join(","))
            }
        };
        walk(t, child, depth + 1, Some(label), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_seeds("4, 9,1").unwrap(), vec![4, 9, 1]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn summary_of_rows() {
        let row = |bac: f64| ReportRow {
            arm: Arm::Defaults,
            seed: 1,
            outer_fold: 0,
            config: treetune::Configuration::new(),
            inner_fitness: None,
            test_bac: bac,
            tree_size: 3,
            evaluations: 0,
            tuning_us: 0,
            training_us: 2_000_000,
            testing_us: 0,
        };
        let rows = [row(0.5), row(0.7)];
        let s = summarize(Arm::Defaults, rows.iter());
        assert_eq!(s.cells, 2);
        assert!((s.mean_bac - 0.6).abs() < 1e-12);
        assert!((s.sd_bac - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.mean_training_s, 2.0);
    }
}

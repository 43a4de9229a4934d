//! End-to-end acceptance checks. Each test prints one PASS/FAIL line with
//! the measured values before asserting.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treetune::complexity::{self, advise, ComplexityProfile, Recommendation};
use treetune::data::{balanced_accuracy, load_arff, tree_size, ConfusionMatrix, FeatureColumn, FoldPlan};
use treetune::forest::RegressionTree;
use treetune::harness::{convergence_stats, run_experiment, Arm, ExperimentPlan, ExperimentReport};
use treetune::importance::{fit_forest, tree_decomposition, variance_decomposition};
use treetune::space::{ParamSpace, ParamSpec};
use treetune::stats::{nemenyi_cd, Verdict};
use treetune::trees::{self, Split};
use treetune::tuners::{run_tuner, OptimizationPath, Technique, Trial};
use treetune::{builtin_space, Configuration, Dataset, Learner, Value};

const BAC_TOL: f64 = 1e-12;
const NEMENYI_EXPECTED: f64 = 0.848;
const NEMENYI_TOL: f64 = 0.01;
const CONSERVATION_TOL: f64 = 1e-6;
const ADDITIVE_PAIR_MAX: f64 = 0.01;
const ORACLE_TOL: f64 = 1e-9;
const MAIN_EFFECT_TOL: f64 = 0.05;
const WILCOXON_ALPHA: f64 = 0.05;
const BUDGET: usize = 900;

fn verdict(name: &str, pass: bool, detail: &str) {
    println!("{name}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn openml(id: i64) -> Dataset {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/data/openml/{id}.arff"));
    load_arff(p).unwrap()
}

#[test]
fn metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = rng.gen_range(2..=6);
        let rows: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| if rng.gen_bool(0.2) { 0 } else { rng.gen_range(0..40) }).collect())
            .collect();
        if rows.iter().all(|r| r.iter().sum::<u64>() == 0) {
            continue;
        }
        let cm = ConfusionMatrix::from_rows(&rows);
        let mut recalls = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let total: u64 = r.iter().sum();
            if total > 0 {
                recalls.push(r[i] as f64 / total as f64);
            }
        }
        let oracle = recalls.iter().sum::<f64>() / recalls.len() as f64;
        worst = worst.max((balanced_accuracy(&cm).unwrap() - oracle).abs());
    }
    verdict("metric oracle", worst <= BAC_TOL, &format!("max |bac - oracle| = {worst:e}"));
}

#[test]
fn stratification_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for d in 0..200 {
        let classes = rng.gen_range(2..=6);
        let n = rng.gen_range(30..400);
        let weights: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let labels: Vec<usize> = (0..n)
            .map(|_| {
                let mut u = rng.gen::<f64>() * total;
                weights.iter().position(|w| {
                    u -= w;
                    u < 0.0
                })
                .unwrap_or(classes - 1)
            })
            .collect();
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        for k in [3, 10] {
            let plan = FoldPlan::stratified(&labels, &names, k, d as u64, false).unwrap();
            for c in 0..classes {
                let n_c = labels.iter().filter(|&&l| l == c).count() as f64;
                for f in 0..k {
                    let got = (0..n).filter(|&i| labels[i] == c && plan.assignment[i] == f).count() as f64;
                    worst = worst.max((got - n_c / k as f64).abs());
                }
            }
        }
    }
    verdict("stratification", worst <= 1.0, &format!("max deviation from proportional = {worst:.3}"));
}

fn three_param_space() -> ParamSpace {
    ParamSpace::new(
        "three",
        vec![
            ParamSpec::real("x", 0.0, 1.0, 0.5),
            ParamSpec::integer("n", 1, 40, 10),
            ParamSpec::categorical("c", &["a", "b", "c"], "a"),
        ],
    )
    .unwrap()
}

fn three_param_fitness(c: &Configuration) -> f64 {
    let x = c.real("x").unwrap();
    let n = c.int("n").unwrap() as f64;
    let bonus = match c.level("c") {
        Some("b") => 0.1,
        Some("c") => 0.05,
        _ => 0.0,
    };
    0.8 - (x - 0.37).powi(2) - ((n - 23.0) / 40.0).powi(2) + bonus
}

fn same_path(a: &OptimizationPath, b: &OptimizationPath) -> bool {
    a.trials.len() == b.trials.len()
        && a.trials.iter().zip(&b.trials).all(|(x, y)| {
            x.index == y.index && x.config == y.config && x.fitness.to_bits() == y.fitness.to_bits() && x.instance == y.instance
        })
}

#[test]
fn budget_exactness_and_replay() {
    let space = three_param_space();
    let mut lines = Vec::new();
    let mut ok = true;
    for t in Technique::ALL {
        let a = run_tuner(t, &space, &three_param_fitness, BUDGET, 2024).unwrap();
        let b = run_tuner(t, &space, &three_param_fitness, BUDGET, 2024).unwrap();
        let used = a.path.len();
        let exact = if t == Technique::Irace { used <= BUDGET } else { used == BUDGET };
        let consumed = a.budget.consumed == used;
        let incumbent = a.path.trials.iter().any(|tr| tr.config == a.best);
        let replay = same_path(&a.path, &b.path) && a.best == b.best && a.best_fitness.to_bits() == b.best_fitness.to_bits();
        ok &= exact && consumed && incumbent && replay;
        lines.push(format!("{t}={used}{}", if replay { "" } else { "(replay differs)" }));
    }
    verdict("budget exactness", ok, &format!("evaluations {}", lines.join(" ")));
}

#[test]
fn brute_force_equivalence() {
    let space = ParamSpace::new(
        "enumerable",
        vec![
            ParamSpec::integer("i", 1, 4, 1),
            ParamSpec::boolean("flag", false),
            ParamSpec::categorical("k", &["p", "q", "r", "s"], "p"),
        ],
    )
    .unwrap();
    let f = |c: &Configuration| {
        let i = c.int("i").unwrap() as f64;
        let flag = if c.flag("flag").unwrap() { 0.07 } else { 0.0 };
        let k = match c.level("k").unwrap() {
            "p" => 0.0,
            "q" => 0.11,
            "r" => 0.05,
            _ => 0.02,
        };
        0.5 - 0.03 * (i - 3.0).powi(2) + flag + k
    };
    let mut all = Vec::new();
    for i in 1..=4 {
        for flag in [false, true] {
            for k in ["p", "q", "r", "s"] {
                all.push(
                    Configuration::new()
                        .with("i", Value::Int(i))
                        .with("flag", Value::Bool(flag))
                        .with("k", Value::Level(k.into())),
                );
            }
        }
    }
    assert_eq!(all.len(), 32);
    let argmax = all.iter().max_by(|a, b| f(a).total_cmp(&f(b))).unwrap().clone();
    let mut ok = true;
    let mut misses = Vec::new();
    for t in Technique::ALL {
        let r = run_tuner(t, &space, &f, BUDGET, 5).unwrap();
        if r.best != argmax {
            ok = false;
            misses.push(format!("{t} -> {}", r.best));
        }
    }
    verdict("brute-force equivalence", ok, &format!("argmax {argmax}; misses [{}]", misses.join(", ")));
}

#[test]
fn nemenyi_constant() {
    let cd = nemenyi_cd(7, 94, 0.1).unwrap();
    verdict(
        "nemenyi constant",
        (cd - NEMENYI_EXPECTED).abs() <= NEMENYI_TOL,
        &format!("cd(7, 94, 0.1) = {cd:.4}, expected {NEMENYI_EXPECTED}"),
    );
}

/// Exact two-way ANOVA of a tree over the grid its thresholds induce,
/// evaluated through `predict` at cell midpoints.
fn grid_anova(tree: &RegressionTree) -> (f64, f64, f64, f64) {
    let edges: Vec<Vec<f64>> = (0..2)
        .map(|d| {
            let mut e = vec![0.0, 1.0];
            e.extend(tree.nodes.iter().filter_map(|n| n.split).filter(|s| s.0 == d).map(|s| s.1));
            e.sort_by(f64::total_cmp);
            e.dedup();
            e
        })
        .collect();
    let w: Vec<Vec<f64>> = edges.iter().map(|e| e.windows(2).map(|p| p[1] - p[0]).collect()).collect();
    let mid: Vec<Vec<f64>> = edges.iter().map(|e| e.windows(2).map(|p| (p[0] + p[1]) / 2.0).collect()).collect();
    let f: Vec<Vec<f64>> = mid[0].iter().map(|&a| mid[1].iter().map(|&b| tree.predict(&[a, b])).collect()).collect();
    let mut mean = 0.0;
    for i in 0..w[0].len() {
        for j in 0..w[1].len() {
            mean += w[0][i] * w[1][j] * f[i][j];
        }
    }
    let mut total = 0.0;
    for i in 0..w[0].len() {
        for j in 0..w[1].len() {
            total += w[0][i] * w[1][j] * (f[i][j] - mean).powi(2);
        }
    }
    let va: f64 = (0..w[0].len())
        .map(|i| {
            let m: f64 = (0..w[1].len()).map(|j| w[1][j] * f[i][j]).sum();
            w[0][i] * (m - mean).powi(2)
        })
        .sum();
    let vb: f64 = (0..w[1].len())
        .map(|j| {
            let m: f64 = (0..w[0].len()).map(|i| w[0][i] * f[i][j]).sum();
            w[1][j] * (m - mean).powi(2)
        })
        .sum();
    (total, va, vb, total - va - vb)
}

const GRID: usize = 40;

#[test]
fn fanova_conservation() {
    let space = ParamSpace::new("grid", vec![ParamSpec::real("a", 0.0, 1.0, 0.5), ParamSpec::real("b", 0.0, 1.0, 0.5)]).unwrap();
    let names = vec!["a".to_string(), "b".to_string()];
    let g = |a: f64, b: f64| 3.0 * (a - 0.4).powi(2) + (b * 6.0).sin() * 0.2;
    let mut trials = Vec::new();
    for x in 0..GRID {
        for y in 0..GRID {
            let (a, b) = ((x as f64 + 0.5) / GRID as f64, (y as f64 + 0.5) / GRID as f64);
            let config = Configuration::new().with("a", Value::Real(a)).with("b", Value::Real(b));
            trials.push(Trial {
                index: trials.len() + 1,
                config,
                fitness: g(a, b),
                wall: Default::default(),
                instance: None,
            });
        }
    }
    let forest = fit_forest(&space, &trials, 100, 7).unwrap();
    let mut worst_sum = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for tree in &forest.trees {
        let (v, parts) = tree_decomposition(tree, 2);
        let sum: f64 = parts.values().sum();
        if v > 0.0 {
            worst_sum = worst_sum.max((sum - v).abs());
        }
        let (total, va, vb, vab) = grid_anova(tree);
        let get = |s: &[usize]| parts.get(s).copied().unwrap_or(0.0);
        for (x, y) in [(v, total), (get(&[0]), va), (get(&[1]), vb), (get(&[0, 1]), vab)] {
            worst_oracle = worst_oracle.max((x - y).abs());
        }
    }
    let report = variance_decomposition(&forest, &names, 2, 0.0);
    let fraction_sum: f64 = report.entries.iter().map(|e| e.fraction).sum();
    let pair = report.get(&["a", "b"]).unwrap().fraction;

    // Grid ANOVA of the additive generating function itself.
    let n = 400;
    let pts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let ga: Vec<f64> = pts.iter().map(|&a| pts.iter().map(|&b| g(a, b)).sum::<f64>() / n as f64).collect();
    let gb: Vec<f64> = pts.iter().map(|&b| pts.iter().map(|&a| g(a, b)).sum::<f64>() / n as f64).collect();
    let mean = ga.iter().sum::<f64>() / n as f64;
    let va = ga.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64;
    let vb = gb.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64;
    let share_a = va / (va + vb);
    let got_a = report.get(&["a"]).unwrap().fraction;

    let pass = worst_sum <= CONSERVATION_TOL
        && (fraction_sum - 1.0).abs() <= CONSERVATION_TOL
        && worst_oracle <= ORACLE_TOL
        && pair < ADDITIVE_PAIR_MAX
        && (got_a - share_a).abs() <= MAIN_EFFECT_TOL;
    verdict(
        "fanova conservation",
        pass,
        &format!(
            "max |sum V_U - V| = {worst_sum:e}, |sum fractions - 1| = {:e}, max |tree - grid oracle| = {worst_oracle:e}, pair = {pair:.5}, a = {got_a:.4} vs grid {share_a:.4}",
            (fraction_sum - 1.0).abs()
        ),
    );
}

fn tennis() -> Dataset {
    let rows = [
        ("sunny", "hot", "high", "weak", "no"),
        ("sunny", "hot", "high", "strong", "no"),
        ("overcast", "hot", "high", "weak", "yes"),
        ("rain", "mild", "high", "weak", "yes"),
        ("rain", "cool", "normal", "weak", "yes"),
        ("rain", "cool", "normal", "strong", "no"),
        ("overcast", "cool", "normal", "strong", "yes"),
        ("sunny", "mild", "high", "weak", "no"),
        ("sunny", "cool", "normal", "weak", "yes"),
        ("rain", "mild", "normal", "weak", "yes"),
        ("sunny", "mild", "normal", "strong", "yes"),
        ("overcast", "mild", "high", "strong", "yes"),
        ("overcast", "hot", "normal", "weak", "yes"),
        ("rain", "mild", "high", "strong", "no"),
    ];
    let cols: [(&str, &[&str]); 4] = [
        ("outlook", &["sunny", "overcast", "rain"]),
        ("temperature", &["hot", "mild", "cool"]),
        ("humidity", &["high", "normal"]),
        ("wind", &["weak", "strong"]),
    ];
    type Row = (&'static str, &'static str, &'static str, &'static str, &'static str);
    let pick = |r: &Row, j: usize| -> &'static str { [r.0, r.1, r.2, r.3][j] };
    let features = cols
        .iter()
        .enumerate()
        .map(|(j, (name, levels))| {
            FeatureColumn::categorical(
                *name,
                levels.iter().map(|s| s.to_string()).collect(),
                rows.iter().map(|r| Some(levels.iter().position(|l| *l == pick(r, j)).unwrap() as u32)).collect(),
            )
        })
        .collect();
    Dataset::new(
        "tennis",
        features,
        rows.iter().map(|r| usize::from(r.4 == "no")).collect(),
        vec!["yes".into(), "no".into()],
    )
    .unwrap()
}

fn entropy(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).log2()).sum()
}

#[test]
fn tree_learner_oracle() {
    let d = tennis();
    let n = d.len() as f64;
    let class_counts: Vec<f64> = d.class_counts().iter().map(|&c| c as f64).collect();
    let base = entropy(&class_counts);
    let ratios: Vec<f64> = (0..d.n_features())
        .map(|j| {
            let levels = d.feature(j).level_count();
            let mut table = vec![vec![0.0; 2]; levels];
            for r in 0..d.len() {
                table[d.feature(j).raw()[r] as usize][d.label(r)] += 1.0;
            }
            let sizes: Vec<f64> = table.iter().map(|t| t.iter().sum()).collect();
            let gain = base - table.iter().zip(&sizes).map(|(t, s)| s / n * entropy(t)).sum::<f64>();
            gain / entropy(&sizes)
        })
        .collect();
    let best = (0..ratios.len()).max_by(|&a, &b| ratios[a].total_cmp(&ratios[b])).unwrap();
    let rows: Vec<usize> = (0..d.len()).collect();
    let space = builtin_space(Learner::J48, d.n_features()).unwrap();
    let j48 = trees::fit(Learner::J48, &d, &rows, &space.defaults(), 1).unwrap();
    let root = j48.nodes()[j48.root].split.as_ref().map(Split::feature);

    let xs = [1.0, 2.0, 2.5, 4.0, 9.0, 10.0, 11.5, 13.0];
    let toy = Dataset::new(
        "toy",
        vec![FeatureColumn::numeric("x", xs.iter().map(|&x| Some(x)).collect())],
        vec![0, 0, 0, 0, 1, 1, 1, 1],
        vec!["lo".into(), "hi".into()],
    )
    .unwrap();
    let derived = (4.0 + 9.0) / 2.0;
    let cart_space = builtin_space(Learner::Cart, 1).unwrap();
    let config = cart_space.parse_assignments("minsplit=2 minbucket=1").unwrap();
    let cart = trees::fit(Learner::Cart, &toy, &(0..8).collect::<Vec<_>>(), &config, 1).unwrap();
    let threshold = match &cart.nodes()[cart.root].split {
        Some(Split::Numeric { threshold, .. }) => Some(*threshold),
        _ => None,
    };
    let pass = root == Some(best) && tree_size(&cart) == 3 && threshold == Some(derived);
    verdict(
        "tree-learner oracle",
        pass,
        &format!(
            "gain ratios {:?}, oracle root {}, j48 root {:?}; cart size {} threshold {:?} (derived {derived})",
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            d.feature(best).name,
            root.map(|j| d.feature(j).name.clone()),
            tree_size(&cart),
            threshold
        ),
    );
}

/// Independent leakage audit: every inner row of a cell must lie in the
/// outer training part of that cell's fold, and the inner rows must be that
/// whole training part.
fn audit(report: &ExperimentReport) -> Result<usize, String> {
    let mut checked = 0;
    for a in &report.audit {
        let (_, outer) = report.outer_plans.iter().find(|(s, _)| *s == a.seed).ok_or("missing outer plan")?;
        let train: BTreeSet<usize> = (0..outer.assignment.len()).filter(|&r| outer.assignment[r] != a.outer_fold).collect();
        let inner: BTreeSet<usize> = a.rows.iter().copied().collect();
        if !inner.is_subset(&train) {
            return Err(format!("{} seed {} fold {} leaks", a.arm, a.seed, a.outer_fold));
        }
        if a.arm != Arm::Defaults && inner != train {
            return Err(format!("{} seed {} fold {} skipped training rows", a.arm, a.seed, a.outer_fold));
        }
        checked += 1;
    }
    Ok(checked)
}

#[test]
fn tuned_cart_beats_defaults() {
    let mut wins = 0;
    let mut lines = Vec::new();
    let mut leak = None;
    for (id, name) in [(1460, "banana"), (36, "segment"), (3, "kr-vs-kp")] {
        let d = openml(id);
        let plan = ExperimentPlan {
            techniques: vec![Technique::Irace],
            budget: BUDGET,
            seeds: (1..=10).collect(),
            ..ExperimentPlan::new(format!("openml:{id}"), Learner::Cart, vec![])
        };
        let report = run_experiment(&plan, &d).unwrap();
        if let Err(e) = audit(&report) {
            leak = Some(e);
        }
        let (_, w) = report.compare_to_defaults(WILCOXON_ALPHA).unwrap().remove(0);
        let improved = w.p_value < WILCOXON_ALPHA && w.verdict == Verdict::Improve;
        wins += usize::from(improved);
        lines.push(format!(
            "{name}: defaults {:.4} irace {:.4} p={:.5} {:?}",
            report.mean_bac(Arm::Defaults),
            report.mean_bac(Arm::Tuned(Technique::Irace)),
            w.p_value,
            w.verdict
        ));
    }
    verdict(
        "tuned cart beats defaults",
        wins >= 2 && leak.is_none(),
        &format!("{wins}/3 significant; {}{}", lines.join("; "), leak.map(|e| format!("; {e}")).unwrap_or_default()),
    );
}

fn is_monotone(p: &OptimizationPath) -> bool {
    p.cumulative_best().windows(2).all(|w| w[1] >= w[0])
}

#[test]
fn convergence_logging() {
    let space = three_param_space();
    let mut paths = 0;
    let mut ok = true;
    for t in Technique::ALL {
        let r = run_tuner(t, &space, &three_param_fitness, BUDGET, 9).unwrap();
        ok &= is_monotone(&r.path);
        paths += 1;
    }
    let plan = ExperimentPlan {
        techniques: Technique::ALL.to_vec(),
        budget: 30,
        outer_k: 5,
        seeds: vec![1, 2],
        ..ExperimentPlan::new("openml:61", Learner::J48, vec![])
    };
    let report = run_experiment(&plan, &openml(61)).unwrap();
    for cp in &report.paths {
        ok &= is_monotone(&cp.path);
        paths += 1;
    }
    let mut flat = OptimizationPath::default();
    for i in 1..=60 {
        let f = if i <= 37 { i as f64 / 100.0 } else { 0.37 - (i % 3) as f64 * 0.01 };
        flat.push(Configuration::new(), f, Default::default(), None);
    }
    let at = convergence_stats(&flat, 0.0);
    verdict(
        "convergence logging",
        ok && at == Some(37),
        &format!("{paths} paths monotone = {ok}; flat-after-37 converges at {at:?}"),
    );
}

fn profile(f1: f64, f3: f64, f4: f64, n1: f64, n2: f64, n4: f64, l2: f64, cls: usize) -> ComplexityProfile {
    ComplexityProfile { f1, f3, f4, n1, n2, n4, l2, cls, flags: Vec::new() }
}

fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.gen_range(12..80);
    let p = rng.gen_range(1..5);
    let classes = rng.gen_range(2..4);
    let labels: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.gen_range(0..classes) }).collect();
    let mut features: Vec<FeatureColumn> = (0..p)
        .map(|j| {
            let shift = rng.gen_range(0.0..2.0);
            FeatureColumn::numeric(
                format!("x{j}"),
                labels.iter().map(|&l| Some(rng.gen_range(-1.0..1.0) + shift * l as f64)).collect(),
            )
        })
        .collect();
    if rng.gen_bool(0.5) {
        features.push(FeatureColumn::categorical(
            "cat",
            vec!["u".into(), "v".into(), "w".into()],
            (0..n).map(|_| Some(rng.gen_range(0..3))).collect(),
        ));
    }
    let names = (0..classes).map(|c| format!("k{c}")).collect();
    Dataset::new("random", features, labels, names).unwrap()
}

#[test]
fn complexity_measures() {
    let num = |xs: &[f64], labels: Vec<usize>| {
        Dataset::new(
            "toy",
            vec![FeatureColumn::numeric("x", xs.iter().map(|&x| Some(x)).collect())],
            labels,
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    };
    let equal_means = num(&[1.0, 3.0, 2.0, 0.0, 4.0, 2.0], vec![0, 0, 0, 1, 1, 1]);
    let f1 = complexity::f1(&equal_means).unwrap();
    let chain = num(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], vec![0, 1, 0, 1, 0, 1, 0, 1]);
    let n1 = complexity::n1(&chain).unwrap();
    let separable = num(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0], vec![0, 0, 0, 1, 1, 1]);
    let l2 = complexity::l2(&separable).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut out_of_range = Vec::new();
    for _ in 0..100 {
        let d = random_dataset(&mut rng);
        let p = complexity::profile(&d).unwrap();
        for (name, v) in [("f3", p.f3), ("f4", p.f4), ("n1", p.n1), ("n4", p.n4), ("l2", p.l2)] {
            if !(0.0..=1.0).contains(&v) {
                out_of_range.push(format!("{name}={v}"));
            }
        }
        if !(p.f1 >= 0.0) {
            out_of_range.push(format!("f1={}", p.f1));
        }
        if !(p.n2 >= 0.0) {
            out_of_range.push(format!("n2={}", p.n2));
        }
    }

    use Recommendation::{Defaults, Tune};
    let easy = profile(5.0, 0.5, 0.95, 0.1, 0.3, 0.1, 0.5, 2);
    let cases: Vec<(ComplexityProfile, Learner, Recommendation)> = vec![
        (profile(5.0, 0.5, 0.5, 0.1, 0.3, 0.1, 0.5, 9), Learner::J48, Tune),
        (profile(0.05, 0.5, 0.5, 0.1, 0.3, 0.1, 0.5, 2), Learner::J48, Tune),
        (profile(5.0, 0.5, 0.5, 0.25, 0.3, 0.1, 0.5, 2), Learner::J48, Tune),
        (easy.clone(), Learner::J48, Defaults),
        (profile(5.0, 0.5, 0.95, 0.3, 0.3, 0.2, 0.5, 2), Learner::Cart, Defaults),
        (profile(5.0, 0.5, 0.5, 0.278, 0.3, 0.2, 0.5, 2), Learner::Cart, Defaults),
        (profile(5.0, 0.01, 0.5, 0.3, 0.3, 0.2, 0.5, 2), Learner::Cart, Tune),
        (profile(5.0, 0.5, 0.5, 0.3, 0.3, 0.3, 0.5, 2), Learner::Cart, Tune),
        (profile(5.0, 0.5, 0.5, 0.2, 0.3, 0.2, 0.5, 2), Learner::Cart, Tune),
        (profile(5.0, 0.5, 0.5, 0.1, 0.6, 0.1, 0.5, 2), Learner::Ctree, Tune),
        (profile(5.0, 0.5, 0.5, 0.1, 0.3, 0.1, 0.1, 2), Learner::Ctree, Tune),
        (easy, Learner::Ctree, Defaults),
    ];
    let wrong: Vec<String> = cases
        .iter()
        .filter(|(p, l, want)| advise(p, *l).verdict != *want)
        .map(|(p, l, want)| format!("{l} {p:?} wanted {want}"))
        .collect();
    let pass = f1 == 0.0 && n1 == 1.0 && l2 == 0.0 && out_of_range.is_empty() && wrong.is_empty();
    verdict(
        "complexity measures",
        pass,
        &format!(
            "f1 = {f1}, n1 = {n1}, l2 = {l2}, out of range {:?}, advice mismatches {:?} of {}",
            out_of_range,
            wrong,
            cases.len()
        ),
    );
}

#[test]
fn no_leakage_audit() {
    let plan = ExperimentPlan {
        techniques: Technique::ALL.to_vec(),
        budget: 100,
        ..ExperimentPlan::desk("openml:61", Learner::Cart, vec![])
    };
    let report = run_experiment(&plan, &openml(61)).unwrap();
    let expected = plan.arms().len() * plan.seeds.len() * plan.outer_k;
    let result = audit(&report);
    let pass = matches!(result, Ok(n) if n == expected) && report.check_leakage().is_ok();
    verdict(
        "no leakage",
        pass,
        &format!("{:?} of {expected} cells audited across {} arms x {} seeds", result, plan.arms().len(), plan.seeds.len()),
    );
}

//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supervise_core::allocation::{sa_exact, sa_greedy, vc_to_sa, SAInstance};
use supervise_core::binary::{
    best_response_under_superior, counterexample_trace, equilibrium_heterogeneous, equilibrium_homogeneous,
    expected_loss_pair, min_penalty_hierarchical, population_proficiency_check, proficiency_sigma, PopulationModel,
    WorkerType,
};
use supervise_core::flat::{best_response_flat, best_response_flat_quant};
use supervise_core::quant::{best_response_quant, expected_penalty_quant};
use supervise_core::sim::{
    simulate_binary, simulate_quant, BinaryStrategies, Gaussian, QuantStrategies, SimConfig, SimStructure, Strategies,
};
use supervise_core::structure::{
    build_peg_assignment, build_supervision_hierarchy, build_supervision_tree, AssignmentGraph, CoverMode, Node,
    SupervisionTree,
};
use supervise_core::{EffortFamily, EffortFunction, Error, SchemeParams};

/// Relative slack on the hierarchical penalty bound.
const BOUND_SLACK: f64 = 1e-6;
const TRUTHFUL_LEVELS: usize = 10_000;
/// Penalty as a fraction of the bound in the tightness chain.
const TIGHT_FRACTION: f64 = 0.99;
/// Grid resolution as a fraction of the search window.
const GRID_RESOLUTION: f64 = 1e-5;
const MAX_Z: f64 = 3.0;
const HETERO_DEPTH: usize = 30;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_supervise")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).expect("utf-8 output"))
}

const FAMILIES: [EffortFamily; 3] = [EffortFamily::SimpleLog, EffortFamily::BoundaryLog, EffortFamily::InversePower];

fn cost(fam: EffortFamily, a: f64, x: f64) -> f64 {
    match fam {
        EffortFamily::SimpleLog => -a * x.ln(),
        EffortFamily::BoundaryLog => a * (1.0 / (2.0 * x)).ln().powi(2),
        EffortFamily::InversePower => a / x,
    }
}

/// Argmin over `hi * i / n`, `i = 1..=n`, and the step.
fn grid_argmin(hi: f64, loss: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = (1.0 / GRID_RESOLUTION).round() as usize;
    let best = (1..=n)
        .map(|i| hi * i as f64 / n as f64)
        .map(|x| (loss(x), x))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1;
    (best, hi / n as f64)
}

fn criterion_1() -> Check {
    let (code, out) = cli(&["threshold", "binary", "--effort", "simplelog", "--alpha", "1", "--epsilon", "0.25", "--k", "2"]);
    ensure(code == 0 && out.trim() == "16", || format!("threshold binary printed {out:?} (exit {code})"))?;
    let (code, out) = cli(&["threshold", "quant", "--effort", "inversepower", "--alpha", "1", "--k", "4", "--c", "1"]);
    ensure(code == 0 && out.trim() == "2", || format!("threshold quant printed {out:?} (exit {code})"))?;
    Ok("C = 16, v* = 2".into())
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let fam = FAMILIES[i % 3];
        let alpha = rng.random_range(0.05..5.0);
        let k = rng.random_range(1..=10);
        let eps = rng.random_range(0.01..0.49);
        let f = EffortFunction::new(fam, alpha).unwrap();
        let base = SchemeParams::new(k, 1.0, eps).unwrap();
        let bound = min_penalty_hierarchical(&f, &base).map_err(|e| e.to_string())?;
        let params = base.with_penalty(bound * (1.0 + BOUND_SLACK)).unwrap();
        let prof = equilibrium_homogeneous(&f, &params, TRUTHFUL_LEVELS, 0.0).map_err(|e| e.to_string())?;
        let top = prof.max_worker_error();
        ensure(top < eps, || format!("{fam:?} alpha={alpha} k={k} eps={eps}: level error {top} reaches eps"))?;
        worst = worst.max(top / eps);
    }
    Ok(format!("200 instances x {TRUTHFUL_LEVELS} levels, max error/eps = {worst:.9}"))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut deepest = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=10);
        let eps = rng.random_range(0.005..0.245);
        let bound = k as f64 / (eps * (1.0 - 2.0 * eps));
        let params = SchemeParams::new(k, bound * TIGHT_FRACTION, eps).unwrap();
        let tr = counterexample_trace(&params, 1_000_000).map_err(|e| e.to_string())?;
        let (delta, cap) = (tr.delta.unwrap(), tr.guaranteed_depth.unwrap());
        let cross = tr.crossing.ok_or_else(|| format!("k={k} eps={eps}: no crossing"))?;
        ensure(cross <= cap, || format!("k={k} eps={eps}: crossed at {cross} > {cap}"))?;
        for (t, w) in tr.errors[..cross].windows(2).enumerate() {
            ensure(w[1] - w[0] > delta, || format!("k={k} eps={eps}: step {} is {} <= delta {delta}", t + 1, w[1] - w[0]))?;
        }
        deepest = deepest.max(cross);
    }
    let (code, out) = cli(&["counterexample", "--k", "2", "--C", "10", "--epsilon", "0.2", "--max-depth", "50"]);
    ensure(code == 0, || format!("counterexample exited {code}"))?;
    let field = |name: &str| {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("{name}=")))
            .map(str::to_string)
            .ok_or_else(|| format!("missing {name} in {out:?}"))
    };
    ensure(field("crossing_level")? == "2", || "anchor crossing is not level 2".into())?;
    let delta: f64 = field("delta")?.parse().map_err(|_| "delta is not a number".to_string())?;
    ensure((delta - 0.08).abs() <= 1e-12, || format!("anchor delta {delta} != 0.08"))?;
    Ok(format!("100 chains cross within ceil(eps/delta) (deepest {deepest}); anchor level 2, delta 0.08"))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bounded = [EffortFamily::SimpleLog, EffortFamily::BoundaryLog];
    let mut checked = 0;
    let mut compare = |name: &str, got: f64, (want, step): (f64, f64)| {
        checked += 1;
        ensure((got - want).abs() <= step * (1.0 + 1e-9), || format!("{name}: analytic {got}, grid {want}, step {step}"))
    };
    for i in 0..500 {
        let fam = bounded[i % 2];
        let hi = fam.natural_upper();
        let (a, k, c) = (rng.random_range(0.1..3.0), rng.random_range(1..=6), rng.random_range(5.0..60.0));
        let f = EffortFunction::new(fam, a).unwrap();
        let kf = k as f64;

        let p = rng.random_range(0.05..1.0);
        let params = SchemeParams::new(k, c, 0.2).unwrap();
        let got = best_response_flat(&f, p, &params).unwrap().value;
        compare("best_response_flat", got, grid_argmin(hi, |e| kf * cost(fam, a, e) + e * p * c))?;

        let (ew, m) = (rng.random_range(0.0..0.5), rng.random_range(2..=6));
        let params = params.with_answers(m).unwrap();
        let d = c * (m as f64 - 2.0) / (m as f64 - 1.0);
        let got = best_response_under_superior(&f, ew, &params).unwrap().value;
        let pair = |e: f64| kf * cost(fam, a, e) + e * (1.0 - ew) * c + (1.0 - e) * ew * c + e * ew * d;
        compare("best_response_under_superior", got, grid_argmin(hi, pair))?;

        let eps = rng.random_range(0.02..0.48);
        let params = SchemeParams { epsilon: eps, ..params };
        let target = c * (2.0 * eps - 1.0) / kf;
        let got = proficiency_sigma(&f, &params).unwrap().value;
        compare("proficiency_sigma", got, grid_argmin(hi, |x| cost(fam, a, x) - target * x))?;

        // unbounded variances: loss(v) >= c v and loss(1) bound the minimizer
        let (a, c, p) = (rng.random_range(0.1..3.0), rng.random_range(0.2..5.0), rng.random_range(0.05..1.0));
        let g = EffortFunction::inverse_power(a).unwrap();
        let got = best_response_quant(&g, k, c).unwrap().value;
        compare("best_response_quant", got, grid_argmin((kf * a + c) / c, |v| kf * a / v + c * v))?;
        let params = SchemeParams::new(k, c, 1.0).unwrap();
        let got = best_response_flat_quant(&g, p, &params).unwrap().value;
        compare("best_response_flat_quant", got, grid_argmin((kf * a + p * c) / (p * c), |v| kf * a / v + p * c * v))?;
    }
    Ok(format!("{checked} grid comparisons over 5 operations, all within one step"))
}

fn single_pair() -> SimStructure {
    SimStructure::Tree(build_supervision_tree(1, 2, 0).unwrap())
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let log1 = EffortFunction::simple_log(1.0).unwrap();
    for i in 0..6 {
        let (eu, ew) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
        let (m, c, k) = (rng.random_range(2..=5), rng.random_range(1.0..30.0), rng.random_range(1..=4));
        let s = BinaryStrategies {
            answers: m,
            penalty: c,
            supervisor: ew,
            workers: BTreeMap::from([(Node::Worker(0), eu)]),
            default: None,
            effort: Some(log1),
            k: Some(k),
        };
        let r = simulate_binary(&single_pair(), &Strategies::Binary(s), &SimConfig::new(200_000, 50 + i).unwrap())
            .map_err(|e| e.to_string())?;
        let params = SchemeParams::new(k, c, 0.2).unwrap().with_answers(m).unwrap();
        let want = expected_loss_pair(&log1, eu, ew, &params).unwrap();
        let row = &r.workers[0].loss;
        ensure((row.analytic - want).abs() <= 1e-12 * want.abs().max(1.0), || format!("analytic {} vs {want}", row.analytic))?;
        ensure(r.max_abs_z() <= MAX_Z, || format!("binary eu={eu} ew={ew} m={m}: |z| = {}", r.max_abs_z()))?;
        worst = worst.max(r.max_abs_z());
    }
    let s = QuantStrategies {
        penalty: 2.0,
        supervisor: Gaussian { sigma: 0.8, bias: -0.5 },
        workers: BTreeMap::from([(Node::Worker(0), Gaussian { sigma: 1.0, bias: 0.5 })]),
        default: None,
        effort: None,
        k: None,
    };
    let r = simulate_quant(&single_pair(), &Strategies::Quant(s), &SimConfig::new(1_000_000, 55).unwrap())
        .map_err(|e| e.to_string())?;
    let row = r.workers[0].loss;
    let want = expected_penalty_quant(1.0, 0.5, 0.8, -0.5, 2.0);
    ensure((want - 5.28).abs() <= 1e-12, || format!("closed form gives {want}, not 5.28"))?;
    ensure(row.z.abs() <= MAX_Z, || format!("quant anchor: empirical {} vs 5.28, z = {}", row.empirical, row.z))?;
    worst = worst.max(row.z.abs());
    Ok(format!("6 binary pairs at 2e5 episodes, 5.28 anchor at 1e6 ({:.4}), max |z| = {worst:.2}", row.empirical))
}

fn min_vertex_cover(n: u32, edges: &[(u32, u32)]) -> usize {
    (0u32..1 << n)
        .filter(|s| edges.iter().all(|&(a, b)| s >> a & 1 == 1 || s >> b & 1 == 1))
        .map(|s| s.count_ones() as usize)
        .min()
        .unwrap()
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let density = rng.random_range(0.1..0.9);
        let edges: Vec<(u32, u32)> =
            (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|_| rng.random::<f64>() < density).collect();
        let inst = vc_to_sa(n, &edges).map_err(|e| e.to_string())?;
        let sa = sa_exact(&inst).map_err(|e| e.to_string())?.size();
        let vc = min_vertex_cover(n, &edges);
        ensure(sa == vc, || format!("graph {edges:?}: SA {sa} != VC {vc}"))?;
    }
    let mut ratio: f64 = 0.0;
    for i in 0..200 {
        let n_tasks = rng.random_range(1..=20u32);
        let k = rng.random_range(1..=4usize);
        let n_workers = rng.random_range(1..=30u32);
        let mut edges = Vec::new();
        for w in 0..n_workers {
            let deg = rng.random_range(1..=k.min(n_tasks as usize));
            let mut ts = BTreeSet::new();
            while ts.len() < deg {
                ts.insert(rng.random_range(0..n_tasks));
            }
            edges.extend(ts.into_iter().map(|t| (w, t)));
        }
        let g = AssignmentGraph::new((0..n_workers).collect(), (0..n_tasks).collect(), edges).unwrap();
        let inst = SAInstance::with_max_degree(g, k).unwrap();
        let opt = sa_exact(&inst).map_err(|e| e.to_string())?;
        let greedy = sa_greedy(&inst, i);
        ensure(greedy.is_valid_for(&inst) && opt.is_valid_for(&inst), || "invalid cover witness".into())?;
        ensure(greedy.size() <= k * opt.size(), || format!("greedy {} > {k} x {}", greedy.size(), opt.size()))?;
        ratio = ratio.max(greedy.size() as f64 / opt.size() as f64);
    }
    for (n, tasks, k) in [(6, 9, 3), (3, 3, 3), (7, 10, 3), (8, 10, 4), (10, 12, 3), (5, 8, 2)] {
        let peg = build_peg_assignment(n, tasks, k, 60 + n as u64).map_err(|e| e.to_string())?;
        ensure(peg.pegs.len() == n.div_ceil(k), || format!("{n} workers, k={k}: {} pegs", peg.pegs.len()))?;
        let covered: BTreeSet<u32> = peg.pegs.iter().flat_map(|&t| peg.graph.workers_of(t).to_vec()).collect();
        ensure(covered.len() == n, || format!("{n} workers, k={k}: pegs cover {}", covered.len()))?;
        let opt = sa_exact(&SAInstance::new(peg.graph.clone()).unwrap()).unwrap().size();
        ensure(opt == peg.pegs.len(), || format!("{n} workers, k={k}: optimum {opt} != pegs {}", peg.pegs.len()))?;
    }
    Ok(format!("100 reductions exact, 200 greedy runs within k x OPT (worst ratio {ratio:.2}), pegs optimal; 6/3 -> 2 pegs"))
}

fn check_tree(t: &SupervisionTree, tasks: &BTreeSet<u32>, k: usize) -> Result<(), String> {
    t.validate(k).map_err(|e| e.to_string())?;
    let leaves: BTreeSet<u32> = t.leaf_tasks().into_iter().collect();
    ensure(leaves == *tasks, || "leaves are not the task set".into())?;
    ensure(t.levels()[0] == [Node::Supervisor], || "root is not the supervisor".into())?;
    let workers: Vec<Node> = t.workers().collect();
    ensure(workers.iter().collect::<BTreeSet<_>>().len() == workers.len(), || "a worker repeats".into())?;
    for w in t.workers().chain([Node::Supervisor]) {
        let mine: BTreeSet<u32> = t.tasks_of(w).iter().copied().collect();
        ensure(t.children(w).len() <= k && !t.children(w).is_empty(), || format!("{w} has {} children", t.children(w).len()))?;
        for &c in t.children(w) {
            if c.is_task() {
                continue;
            }
            let theirs: BTreeSet<u32> = t.tasks_of(c).iter().copied().collect();
            ensure(mine.intersection(&theirs).count() == 1, || format!("{w} and {c} share {} tasks", mine.intersection(&theirs).count()))?;
        }
    }
    Ok(())
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (n, k, seed) = (rng.random_range(1..=500), rng.random_range(2..=8), rng.random::<u64>());
        let t = build_supervision_tree(n, k, seed).map_err(|e| e.to_string())?;
        check_tree(&t, &(0..n as u32).collect(), k).map_err(|e| format!("tree n={n} k={k} seed={seed}: {e}"))?;
    }
    let mut extended = 0;
    for i in 0..50 {
        let k = rng.random_range(2..=4usize);
        let n_workers = rng.random_range(k..=40);
        let n_tasks = n_workers.div_ceil(k) + (k - 1).max((n_workers * (k - 1)).div_ceil(k)) + rng.random_range(0..5);
        let g = build_peg_assignment(n_workers, n_tasks, k, i).map_err(|e| e.to_string())?.graph;
        let mode = if n_tasks <= 16 { CoverMode::Exact } else { CoverMode::Greedy };
        let h = build_supervision_hierarchy(g, k, i, mode).map_err(|e| e.to_string())?;
        h.validate(Some(k)).map_err(|e| e.to_string())?;
        check_tree(h.tree(), &h.tree_tasks().iter().copied().collect(), k).map_err(|e| format!("hierarchy {i}: {e}"))?;
        for &u in h.graph().workers() {
            let t = h.coverage()[&u];
            ensure(h.graph().has_edge(u, t) && h.tree_tasks().contains(&t), || format!("hierarchy {i}: w{u} uncovered"))?;
        }

        let fam = FAMILIES[i as usize % 3];
        let f = EffortFunction::new(fam, rng.random_range(0.1..3.0)).unwrap();
        let eps = rng.random_range(0.02..0.45);
        let base = SchemeParams::new(k as u32, 1.0, eps).unwrap();
        let bound = min_penalty_hierarchical(&f, &base).unwrap();
        let params = base.with_penalty(bound * (1.0 + rng.random_range(BOUND_SLACK..1.0))).unwrap();
        let tree_eq = equilibrium_homogeneous(&f, &params, h.tree().worker_depth(), 0.0).unwrap();
        let full_eq = equilibrium_homogeneous(&f, &params, h.worker_depth(), 0.0).unwrap();
        if tree_eq.all_truthful() {
            ensure(full_eq.all_truthful(), || format!("hierarchy {i}: extra graph level is not truthful"))?;
            extended += 1;
        }
    }
    Ok(format!("200 trees and 50 hierarchies valid; {extended}/50 truthful trees stay truthful one level deeper"))
}

fn criterion_8() -> Check {
    let (code, out) = cli(&["defection", "--N", "5", "--k", "2", "--C", "10"]);
    ensure(code == 0 && out.trim() == "defect (4.0 < 6.0)", || format!("N=5 printed {out:?}"))?;
    let (_, out) = cli(&["defection", "--N", "3", "--k", "2", "--C", "10"]);
    ensure(out.starts_with("no-defect"), || format!("N=3 printed {out:?}"))?;
    let (_, out) = cli(&["defection", "--N", "4", "--k", "2", "--C", "10"]);
    ensure(out.starts_with("indifferent"), || format!("N=4 printed {out:?}"))?;
    Ok("defect (4.0 < 6.0); N=3 no defection; N=2k indifferent".into())
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < 100 {
        attempts += 1;
        if attempts > 10_000 {
            return Err("could not draw proficient mixtures".into());
        }
        let n_types = rng.random_range(1..=5);
        let eps = rng.random_range(0.05..0.45);
        let k = rng.random_range(1..=5);
        let c = rng.random_range(5.0..100.0);
        let raw: Vec<f64> = (0..n_types).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut types: Vec<(WorkerType, f64)> = raw
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let f = EffortFunction::new(FAMILIES[rng.random_range(0..2)], rng.random_range(0.05..3.0)).unwrap();
                (WorkerType { id: format!("t{i}"), effort: f }, w / total)
            })
            .collect();
        let drift: f64 = types.iter().map(|(_, w)| w).sum::<f64>() - 1.0;
        types[0].1 -= drift;
        let pop = PopulationModel::new(types).unwrap();
        let params = SchemeParams::new(k, c, eps).unwrap();
        let check = population_proficiency_check(&pop, &params).unwrap();
        if !check.proficient {
            continue;
        }
        accepted += 1;
        let prof = equilibrium_heterogeneous(&pop, &params, HETERO_DEPTH, 0.0).map_err(|e| e.to_string())?;
        ensure(prof.proficient_types_truthful(), || format!("mixture {attempts}: a proficient type is untruthful"))?;
    }
    // sigma = alpha / 4 here: 0.125 and 0.4 average to 0.2625 > 0.25
    let params = SchemeParams::new(2, 16.0, 0.25).unwrap();
    let pop = PopulationModel::new(vec![
        (WorkerType { id: "good".into(), effort: EffortFunction::simple_log(0.5).unwrap() }, 0.5),
        (WorkerType { id: "bad".into(), effort: EffortFunction::simple_log(1.6).unwrap() }, 0.5),
    ])
    .unwrap();
    match equilibrium_heterogeneous(&pop, &params, HETERO_DEPTH, 0.0) {
        Err(Error::PopulationNotProficient { mean_sigma, .. }) => {
            Ok(format!("100 proficient mixtures truthful at depth {HETERO_DEPTH}; violating mixture (E[sigma] = {mean_sigma}) rejected"))
        }
        other => Err(format!("violating mixture not rejected: {other:?}")),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("threshold anchor", Duration::from_secs(1), criterion_1),
        ("penalty bound keeps 10^4 levels truthful", Duration::from_secs(30), criterion_2),
        ("tightness below the bound", Duration::from_secs(10), criterion_3),
        ("best responses match grid search", Duration::from_secs(120), criterion_4),
        ("Monte Carlo concordance", Duration::from_secs(120), criterion_5),
        ("allocation suite", Duration::from_secs(60), criterion_6),
        ("structure validation", Duration::from_secs(30), criterion_7),
        ("defection anchor", Duration::from_secs(1), criterion_8),
        ("heterogeneous populations", Duration::from_secs(10), criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let line = match (&result, took <= *budget) {
            (Ok(detail), true) => format!("PASS {}. {name}: {detail} [{took:.2?} <= {budget:?}]", i + 1),
            (Ok(detail), false) => format!("FAIL {}. {name}: {detail} [{took:.2?} > {budget:?}]", i + 1),
            (Err(why), _) => format!("FAIL {}. {name}: {why} [{took:.2?}]", i + 1),
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("{line}");
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Monte Carlo agents over a built structure.
//!
//! Every worker answers its shared task independently; a superior compares
//! answers and charges the penalty on disagreement. Empirical mean losses are
//! reported next to the closed-form expectations.
//!
//! Episodes are split over a fixed number of ChaCha8 substreams. Each
//! substream accumulates its own Welford moments and the substreams are
//! merged in index order, so a report depends on the seed only, never on the
//! thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binary::expected_penalty_pair;
use crate::effort::EffortFunction;
use crate::error::{invalid, Error, Result};
use crate::quant::expected_penalty_quant;
use crate::structure::{Node, SupervisionHierarchy, SupervisionTree};

const SUBSTREAMS: u64 = 64;
pub const MIN_SWEEP_POINTS: usize = 100;

/// What the agents are arranged in.
#[derive(Clone, Debug, PartialEq)]
pub enum SimStructure {
    /// `workers` agents, each audited by the supervisor with probability `p`.
    Flat { workers: u32, p: f64 },
    Tree(SupervisionTree),
    Hierarchy(SupervisionHierarchy),
}

#[derive(Serialize, Deserialize)]
struct FlatWire {
    workers: u32,
    p: f64,
}

impl SimStructure {
    /// Accepts tree JSON, hierarchy JSON or `{"flat":{"workers":n,"p":p}}`.
    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let obj = v.as_object().ok_or_else(|| Error::InvalidStructure("structure must be a JSON object".into()))?;
        if obj.contains_key("flat") {
            let f: FlatWire = serde_json::from_value(v["flat"].clone())?;
            let s = SimStructure::Flat { workers: f.workers, p: f.p };
            s.check()?;
            Ok(s)
        } else if obj.contains_key("graph") {
            Ok(SimStructure::Hierarchy(serde_json::from_value(v)?))
        } else if obj.contains_key("levels") {
            Ok(SimStructure::Tree(serde_json::from_value(v)?))
        } else {
            Err(Error::InvalidStructure("expected a tree, a hierarchy or a flat structure".into()))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(match self {
            SimStructure::Flat { workers, p } => {
                serde_json::to_string_pretty(&serde_json::json!({"flat": FlatWire { workers: *workers, p: *p }}))?
            }
            SimStructure::Tree(t) => serde_json::to_string_pretty(t)?,
            SimStructure::Hierarchy(h) => serde_json::to_string_pretty(h)?,
        })
    }

    fn check(&self) -> Result<()> {
        if let SimStructure::Flat { workers, p } = self {
            if *workers == 0 {
                return Err(invalid("flat structure needs at least one worker"));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(invalid(format!("audit probability must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub sigma: f64,
    #[serde(default)]
    pub bias: f64,
}

impl Gaussian {
    fn check(&self) -> Result<()> {
        if self.sigma.is_finite() && self.sigma >= 0.0 && self.bias.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("sigma must be non-negative and bias finite, got {self:?}")))
        }
    }
}

fn two() -> u32 {
    2
}

fn exact() -> Gaussian {
    Gaussian { sigma: 0.0, bias: 0.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryStrategies {
    #[serde(default = "two")]
    pub answers: u32,
    pub penalty: f64,
    /// Supervisor error probability.
    #[serde(default)]
    pub supervisor: f64,
    #[serde(default)]
    pub workers: BTreeMap<Node, f64>,
    /// Error probability for workers missing from `workers`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort: Option<EffortFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantStrategies {
    pub penalty: f64,
    #[serde(default = "exact")]
    pub supervisor: Gaussian,
    #[serde(default)]
    pub workers: BTreeMap<Node, Gaussian>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Gaussian>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort: Option<EffortFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
}

/// Per-worker strategies and the answer model they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Strategies {
    /// Uniformly drawn truths over `answers` values; a wrong answer is
    /// uniform over the other `answers - 1`.
    Binary(BinaryStrategies),
    /// Answers `truth + bias + sigma Z`.
    Quant(QuantStrategies),
}

impl Strategies {
    fn effort(&self) -> Option<(&EffortFunction, Option<u32>)> {
        match self {
            Strategies::Binary(b) => b.effort.as_ref().map(|f| (f, b.k)),
            Strategies::Quant(q) => q.effort.as_ref().map(|f| (f, q.k)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub episodes: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(episodes: u64, seed: u64) -> Result<Self> {
        if episodes == 0 {
            return Err(invalid("episodes must be at least 1"));
        }
        Ok(SimConfig { episodes, seed })
    }
}

/// A sample mean with its standard error against a reference value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub empirical: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub z: f64,
}

impl Estimate {
    fn new(empirical: f64, stderr: f64, analytic: f64) -> Self {
        let diff = empirical - analytic;
        let z = if stderr > 0.0 {
            diff / stderr
        } else if diff.abs() <= 1e-12 * analytic.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        Estimate { empirical, stderr, analytic, z }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkerRow {
    pub worker: Node,
    pub level: usize,
    #[serde(flatten)]
    pub loss: Estimate,
}

/// Rates on a worker's shared task with its superior.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairRates {
    pub worker: Node,
    pub superior: Node,
    /// Both wrong with different answers; expected `e_u e_w (m - 2) / (m - 1)`.
    pub both_wrong_disagree: Estimate,
    /// Covariance of the two correctness indicators; expected 0.
    pub correctness_cov: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub workers: usize,
    pub empirical: f64,
    pub analytic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub episodes: u64,
    pub workers: Vec<WorkerRow>,
    pub levels: Vec<LevelRow>,
    /// Binary runs only.
    pub pairs: Vec<PairRates>,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("worker,level,empirical,stderr,analytic,z\n");
        for r in &self.workers {
            let l = &r.loss;
            let _ = writeln!(out, "{},{},{},{},{},{}", r.worker, r.level, l.empirical, l.stderr, l.analytic, l.z);
        }
        out
    }

    pub fn row(&self, worker: Node) -> Option<&WorkerRow> {
        self.workers.iter().find(|r| r.worker == worker)
    }

    pub fn max_abs_z(&self) -> f64 {
        let pair_z = self.pairs.iter().flat_map(|p| [p.both_wrong_disagree.z, p.correctness_cov.z]);
        self.workers.iter().map(|r| r.loss.z).chain(pair_z).map(f64::abs).fold(0.0, f64::max)
    }
}

/// Flattened view of who answers what and who compares with whom.
struct Plan {
    agents: Vec<Node>,
    n_tasks: usize,
    /// `(agent, task)` answers drawn each episode.
    slots: Vec<(usize, usize)>,
    links: Vec<Link>,
}

struct Link {
    worker: usize,
    superior: usize,
    level: usize,
    worker_slot: usize,
    superior_slot: usize,
    audit: f64,
}

struct PlanBuilder {
    agents: Vec<Node>,
    agent_idx: BTreeMap<Node, usize>,
    task_idx: BTreeMap<u32, usize>,
    slot_idx: BTreeMap<(usize, usize), usize>,
    slots: Vec<(usize, usize)>,
    links: Vec<Link>,
}

impl PlanBuilder {
    fn new() -> Self {
        let mut b = PlanBuilder {
            agents: Vec::new(),
            agent_idx: BTreeMap::new(),
            task_idx: BTreeMap::new(),
            slot_idx: BTreeMap::new(),
            slots: Vec::new(),
            links: Vec::new(),
        };
        b.agent(Node::Supervisor);
        b
    }

    fn agent(&mut self, n: Node) -> usize {
        let next = self.agents.len();
        *self.agent_idx.entry(n).or_insert_with(|| {
            self.agents.push(n);
            next
        })
    }

    fn slot(&mut self, agent: usize, task: u32) -> usize {
        let next = self.task_idx.len();
        let t = *self.task_idx.entry(task).or_insert(next);
        let next = self.slots.len();
        *self.slot_idx.entry((agent, t)).or_insert_with(|| {
            self.slots.push((agent, t));
            next
        })
    }

    fn link(&mut self, worker: Node, superior: Node, task: u32, level: usize, audit: f64) {
        let (w, s) = (self.agent(worker), self.agent(superior));
        let (worker_slot, superior_slot) = (self.slot(w, task), self.slot(s, task));
        self.links.push(Link { worker: w, superior: s, level, worker_slot, superior_slot, audit });
    }

    fn add_tree(&mut self, tree: &SupervisionTree) {
        for w in tree.workers() {
            let p = tree.parent(w).expect("non-root tree nodes have a parent");
            let t = tree.shared_with_parent(w).expect("tree workers share a task with their parent");
            self.link(w, p, t, tree.level_of(w).expect("node is in the tree"), 1.0);
        }
    }

    fn finish(self) -> Plan {
        Plan { agents: self.agents, n_tasks: self.task_idx.len(), slots: self.slots, links: self.links }
    }
}

impl Plan {
    fn new(structure: &SimStructure) -> Result<Plan> {
        structure.check()?;
        let mut b = PlanBuilder::new();
        match structure {
            SimStructure::Flat { workers, p } => {
                // each worker's audited task is its own, so answers stay independent
                for w in 0..*workers {
                    b.link(Node::Worker(w), Node::Supervisor, w, 1, *p);
                }
            }
            SimStructure::Tree(tree) => b.add_tree(tree),
            SimStructure::Hierarchy(h) => {
                b.add_tree(h.tree());
                let level = h.tree().depth() - 1;
                for (&u, &t) in h.coverage() {
                    let sup = h.superior_of(u).expect("covering tasks are tree leaves");
                    b.link(Node::Worker(u), sup, t, level, 1.0);
                }
            }
        }
        Ok(b.finish())
    }
}

fn lookup<T: Copy>(map: &BTreeMap<Node, T>, default: Option<T>, supervisor: T, n: Node) -> Result<T> {
    if n == Node::Supervisor {
        return Ok(supervisor);
    }
    map.get(&n)
        .copied()
        .or(default)
        .ok_or_else(|| invalid(format!("no strategy for {n}")))
}

fn check_known<T>(map: &BTreeMap<Node, T>, plan: &Plan) -> Result<()> {
    let known: BTreeSet<Node> = plan.agents.iter().copied().collect();
    match map.keys().find(|n| !known.contains(n)) {
        Some(n) => Err(invalid(format!("strategy given for {n}, which is not in the structure"))),
        None => Ok(()),
    }
}

fn effort_term(strategies: &Strategies, x: f64) -> Result<f64> {
    match strategies.effort() {
        None => Ok(0.0),
        Some((f, Some(k))) => Ok(k as f64 * f.eval(x)?),
        Some((_, None)) => Err(invalid("an effort function needs k alongside it")),
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        self.n = n;
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }
}

#[derive(Clone, Default)]
struct Tally {
    penalty: Vec<Moments>,
    /// Joint correctness counts indexed by `2 * worker_correct + superior_correct`.
    joint: Vec<[u64; 4]>,
    both_wrong_disagree: Vec<u64>,
}

impl Tally {
    fn new(links: usize) -> Self {
        Tally {
            penalty: vec![Moments::default(); links],
            joint: vec![[0; 4]; links],
            both_wrong_disagree: vec![0; links],
        }
    }

    fn merge(mut self, o: &Tally) -> Self {
        for i in 0..self.penalty.len() {
            self.penalty[i].merge(&o.penalty[i]);
            for c in 0..4 {
                self.joint[i][c] += o.joint[i][c];
            }
            self.both_wrong_disagree[i] += o.both_wrong_disagree[i];
        }
        self
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `body` over every substream in parallel and folds the results in
/// substream order.
fn run_substreams<T, F>(config: &SimConfig, stream_base: u64, init: T, body: F, merge: impl Fn(T, &T) -> T) -> T
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let per = config.episodes / SUBSTREAMS;
    let extra = config.episodes % SUBSTREAMS;
    let parts: Vec<T> = (0..SUBSTREAMS)
        .into_par_iter()
        .map(|i| {
            let n = per + u64::from(i < extra);
            let mut rng = substream(config.seed, stream_base + i);
            body(&mut rng, n)
        })
        .collect();
    parts.iter().fold(init, merge)
}

fn bernoulli_estimate(count: u64, n: u64, analytic: f64) -> Estimate {
    let p = count as f64 / n as f64;
    let se = if n > 1 { (p * (1.0 - p) * n as f64 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
    Estimate::new(p, se, analytic)
}

fn covariance_estimate(j: &[u64; 4]) -> Estimate {
    let n: u64 = j.iter().sum();
    let nf = n as f64;
    let pu = (j[2] + j[3]) as f64 / nf;
    let pw = (j[1] + j[3]) as f64 / nf;
    let cov = j[3] as f64 / nf - pu * pw;
    let mut second = 0.0;
    for (cell, &count) in j.iter().enumerate() {
        let cu = (cell >> 1) as f64;
        let cw = (cell & 1) as f64;
        let x = (cu - pu) * (cw - pw);
        second += count as f64 * x * x;
    }
    let var = (second / nf - cov * cov).max(0.0);
    let se = if n > 1 { (var / (nf - 1.0)).sqrt() } else { 0.0 };
    Estimate::new(cov, se, 0.0)
}

fn levels_of(rows: &[WorkerRow]) -> Vec<LevelRow> {
    let mut by: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for r in rows {
        let e = by.entry(r.level).or_default();
        e.0 += 1;
        e.1 += r.loss.empirical;
        e.2 += r.loss.analytic;
    }
    by.into_iter()
        .map(|(level, (n, emp, an))| LevelRow { level, workers: n, empirical: emp / n as f64, analytic: an / n as f64 })
        .collect()
}

fn sorted(mut rows: Vec<WorkerRow>, mut pairs: Vec<PairRates>, episodes: u64) -> SimReport {
    let key: BTreeMap<Node, (usize, Node)> = rows.iter().map(|r| (r.worker, (r.level, r.worker))).collect();
    rows.sort_by_key(|r| (r.level, r.worker));
    pairs.sort_by_key(|p| key[&p.worker]);
    SimReport { episodes, levels: levels_of(&rows), workers: rows, pairs }
}

/// Binary answers with uniform-wrong errors.
pub fn simulate_binary(structure: &SimStructure, strategies: &Strategies, config: &SimConfig) -> Result<SimReport> {
    let Strategies::Binary(s) = strategies else {
        return Err(Error::ModelMismatch("simulate_binary needs binary strategies".into()));
    };
    SimConfig::new(config.episodes, config.seed)?;
    if s.answers < 2 {
        return Err(invalid("answer set needs at least 2 elements"));
    }
    if !(s.penalty.is_finite() && s.penalty > 0.0) {
        return Err(invalid(format!("penalty must be positive, got {}", s.penalty)));
    }
    let plan = Plan::new(structure)?;
    check_known(&s.workers, &plan)?;
    let err = plan
        .agents
        .iter()
        .map(|&n| {
            let e = lookup(&s.workers, s.default, s.supervisor, n)?;
            if (0.0..=1.0).contains(&e) {
                Ok(e)
            } else {
                Err(invalid(format!("error probability of {n} must lie in [0, 1], got {e}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = s.answers;
    let c = s.penalty;

    let tally = run_substreams(
        config,
        0,
        Tally::new(plan.links.len()),
        |rng, n| {
            let mut t = Tally::new(plan.links.len());
            let mut truth = vec![0u32; plan.n_tasks];
            let mut ans = vec![0u32; plan.slots.len()];
            for _ in 0..n {
                for v in truth.iter_mut() {
                    *v = rng.random_range(0..m);
                }
                for (a, &(agent, task)) in ans.iter_mut().zip(&plan.slots) {
                    let right = truth[task];
                    *a = if rng.random::<f64>() < err[agent] {
                        let r = rng.random_range(0..m - 1);
                        if r >= right { r + 1 } else { r }
                    } else {
                        right
                    };
                }
                for (i, l) in plan.links.iter().enumerate() {
                    let audited = l.audit >= 1.0 || rng.random::<f64>() < l.audit;
                    let (a, b) = (ans[l.worker_slot], ans[l.superior_slot]);
                    let right = truth[plan.slots[l.worker_slot].1];
                    t.penalty[i].push(if audited && a != b { c } else { 0.0 });
                    let (cu, cw) = (a == right, b == right);
                    t.joint[i][2 * usize::from(cu) + usize::from(cw)] += 1;
                    if !cu && !cw && a != b {
                        t.both_wrong_disagree[i] += 1;
                    }
                }
            }
            t
        },
        |acc, part| acc.merge(part),
    );

    let d = c * (m as f64 - 2.0) / (m as f64 - 1.0);
    let disagree_given_wrong = (m as f64 - 2.0) / (m as f64 - 1.0);
    let mut rows = Vec::with_capacity(plan.links.len());
    let mut pairs = Vec::with_capacity(plan.links.len());
    for (i, l) in plan.links.iter().enumerate() {
        let (eu, ew) = (err[l.worker], err[l.superior]);
        let effort = effort_term(strategies, eu)?;
        let mo = &tally.penalty[i];
        let analytic = l.audit * expected_penalty_pair(eu, ew, c, d) + effort;
        let worker = plan.agents[l.worker];
        rows.push(WorkerRow { worker, level: l.level, loss: Estimate::new(mo.mean + effort, mo.stderr(), analytic) });
        pairs.push(PairRates {
            worker,
            superior: plan.agents[l.superior],
            both_wrong_disagree: bernoulli_estimate(
                tally.both_wrong_disagree[i],
                config.episodes,
                eu * ew * disagree_given_wrong,
            ),
            correctness_cov: covariance_estimate(&tally.joint[i]),
        });
    }
    Ok(sorted(rows, pairs, config.episodes))
}

/// Real-valued answers with Gaussian noise and squared-distance penalty.
pub fn simulate_quant(structure: &SimStructure, strategies: &Strategies, config: &SimConfig) -> Result<SimReport> {
    let Strategies::Quant(s) = strategies else {
        return Err(Error::ModelMismatch("simulate_quant needs quantitative strategies".into()));
    };
    SimConfig::new(config.episodes, config.seed)?;
    if !(s.penalty.is_finite() && s.penalty > 0.0) {
        return Err(invalid(format!("penalty must be positive, got {}", s.penalty)));
    }
    let plan = Plan::new(structure)?;
    check_known(&s.workers, &plan)?;
    let strat = plan
        .agents
        .iter()
        .map(|&n| {
            let g = lookup(&s.workers, s.default, s.supervisor, n)?;
            g.check()?;
            Ok(g)
        })
        .collect::<Result<Vec<Gaussian>>>()?;
    let c = s.penalty;

    let penalty = run_substreams(
        config,
        0,
        vec![Moments::default(); plan.links.len()],
        |rng, n| {
            let mut mo = vec![Moments::default(); plan.links.len()];
            let mut truth = vec![0f64; plan.n_tasks];
            let mut ans = vec![0f64; plan.slots.len()];
            for _ in 0..n {
                for v in truth.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for (a, &(agent, task)) in ans.iter_mut().zip(&plan.slots) {
                    let g = strat[agent];
                    let z: f64 = rng.sample(StandardNormal);
                    *a = truth[task] + g.bias + g.sigma * z;
                }
                for (i, l) in plan.links.iter().enumerate() {
                    let audited = l.audit >= 1.0 || rng.random::<f64>() < l.audit;
                    let d = ans[l.worker_slot] - ans[l.superior_slot];
                    mo[i].push(if audited { c * d * d } else { 0.0 });
                }
            }
            mo
        },
        |mut acc, part| {
            for (a, p) in acc.iter_mut().zip(part) {
                a.merge(p);
            }
            acc
        },
    );

    let mut rows = Vec::with_capacity(plan.links.len());
    for (i, l) in plan.links.iter().enumerate() {
        let (u, w) = (strat[l.worker], strat[l.superior]);
        let effort = effort_term(strategies, u.sigma * u.sigma + u.bias * u.bias)?;
        let analytic = l.audit * expected_penalty_quant(u.sigma, u.bias, w.sigma, w.bias, c) + effort;
        let mo = &penalty[i];
        rows.push(WorkerRow {
            worker: plan.agents[l.worker],
            level: l.level,
            loss: Estimate::new(mo.mean + effort, mo.stderr(), analytic),
        });
    }
    Ok(sorted(rows, Vec::new(), config.episodes))
}

/// Dispatches on the strategies' answer model.
pub fn simulate(structure: &SimStructure, strategies: &Strategies, config: &SimConfig) -> Result<SimReport> {
    match strategies {
        Strategies::Binary(_) => simulate_binary(structure, strategies, config),
        Strategies::Quant(_) => simulate_quant(structure, strategies, config),
    }
}

/// `n` points `lo + (hi - lo) i / n` for `i = 1..=n`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub worker: Node,
    pub grid: Vec<f64>,
    /// Empirical loss at each grid point.
    pub loss: Vec<f64>,
    pub argmin_index: usize,
    pub argmin: f64,
}

/// Empirical best response of every worker, the others held at their
/// strategies.
///
/// Each worker's grid is scored with common random numbers: one episode draws
/// the superior's answer and the worker's noise once and evaluates every grid
/// point against them. For binary models the grid holds error probabilities;
/// for quantitative ones it holds the worker's noise variance `sigma^2`, with
/// the worker's bias kept. Both need `effort` and `k` in the strategies.
pub fn strategy_sweep(
    structure: &SimStructure,
    strategies: &Strategies,
    grid: &[f64],
    config: &SimConfig,
) -> Result<Vec<SweepResult>> {
    SimConfig::new(config.episodes, config.seed)?;
    if grid.len() < MIN_SWEEP_POINTS {
        return Err(invalid(format!("sweep grid needs at least {MIN_SWEEP_POINTS} points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.iter().any(|g| !g.is_finite()) {
        return Err(invalid("sweep grid must be finite and strictly increasing"));
    }
    let (f, k) = match strategies.effort() {
        Some((f, Some(k))) => (f, k as f64),
        _ => return Err(invalid("a sweep needs an effort function and k")),
    };
    let plan = Plan::new(structure)?;
    let n = config.episodes as f64;

    let mut out = Vec::with_capacity(plan.links.len());
    for (li, l) in plan.links.iter().enumerate() {
        let base = SUBSTREAMS * (li as u64 + 1);
        let (penalty, extra): (Vec<f64>, f64) = match strategies {
            Strategies::Binary(s) => {
                check_known(&s.workers, &plan)?;
                let ew = lookup(&s.workers, s.default, s.supervisor, plan.agents[l.superior])?;
                if !(0.0..=1.0).contains(&ew) {
                    return Err(invalid(format!("superior error probability must lie in [0, 1], got {ew}")));
                }
                if grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 {
                    return Err(invalid("binary sweep grid must lie in [0, 1]"));
                }
                let (m, c) = (s.answers, s.penalty);
                let disagree = (m as f64 - 2.0) / (m as f64 - 1.0);
                // penalty when the worker is right everywhere, plus a difference
                // array for grid points above the episode's uniform draw
                let (right, diff) = run_substreams(
                    config,
                    base,
                    (0.0, vec![0.0; grid.len() + 1]),
                    |rng, eps| {
                        let mut right = 0.0;
                        let mut diff = vec![0.0; grid.len() + 1];
                        for _ in 0..eps {
                            let u: f64 = rng.random();
                            let sup_wrong = rng.random::<f64>() < ew;
                            let differ = rng.random::<f64>() < disagree;
                            let audited = l.audit >= 1.0 || rng.random::<f64>() < l.audit;
                            if !audited {
                                continue;
                            }
                            let if_right = if sup_wrong { c } else { 0.0 };
                            let if_wrong = if !sup_wrong || differ { c } else { 0.0 };
                            right += if_right;
                            diff[grid.partition_point(|&g| g <= u)] += if_wrong - if_right;
                        }
                        (right, diff)
                    },
                    |(r, mut d), (pr, pd)| {
                        for (a, b) in d.iter_mut().zip(pd) {
                            *a += b;
                        }
                        (r + pr, d)
                    },
                );
                let mut acc = right;
                let pen = diff[..grid.len()]
                    .iter()
                    .map(|d| {
                        acc += d;
                        acc / n
                    })
                    .collect();
                (pen, 0.0)
            }
            Strategies::Quant(s) => {
                check_known(&s.workers, &plan)?;
                let me = lookup(&s.workers, s.default, s.supervisor, plan.agents[l.worker])?;
                let sup = lookup(&s.workers, s.default, s.supervisor, plan.agents[l.superior])?;
                sup.check()?;
                if grid[0] < 0.0 {
                    return Err(invalid("quantitative sweep grid holds variances, which are non-negative"));
                }
                let c = s.penalty;
                // c (sqrt(v) Z + d)^2 summed through Z^2, Z d and d^2
                let sums = run_substreams(
                    config,
                    base,
                    [0.0; 3],
                    |rng, eps| {
                        let mut acc = [0.0; 3];
                        for _ in 0..eps {
                            let z: f64 = rng.sample(StandardNormal);
                            let zs: f64 = rng.sample(StandardNormal);
                            let audited = l.audit >= 1.0 || rng.random::<f64>() < l.audit;
                            if !audited {
                                continue;
                            }
                            let d = me.bias - sup.bias - sup.sigma * zs;
                            acc[0] += z * z;
                            acc[1] += z * d;
                            acc[2] += d * d;
                        }
                        acc
                    },
                    |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]],
                );
                let pen = grid
                    .iter()
                    .map(|&v| c * (v * sums[0] + 2.0 * v.sqrt() * sums[1] + sums[2]) / n)
                    .collect();
                (pen, me.bias * me.bias)
            }
        };
        let loss = grid
            .iter()
            .zip(&penalty)
            .map(|(&g, p)| Ok(k * f.eval(g + extra)? + p))
            .collect::<Result<Vec<f64>>>()?;
        let argmin_index = loss
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("grid is non-empty");
        out.push(SweepResult {
            worker: plan.agents[l.worker],
            grid: grid.to_vec(),
            loss,
            argmin_index,
            argmin: grid[argmin_index],
        });
    }
    out.sort_by_key(|r| r.worker);
    Ok(out)
}

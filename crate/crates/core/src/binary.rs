//! Hierarchical supervision for binary-verifiable tasks.
//!
//! A worker `u` at level `t` shares one task with its superior `w` at level
//! `t - 1` and pays `C` whenever their answers on that task differ. With
//! error probabilities `e_u`, `e_w` the expected loss is
//!
//! ```text
//! L(e_u, e_w) = k f(e_u) + e_u (1 - e_w) C + (1 - e_u) e_w C + e_u e_w D
//! ```
//!
//! and the best response solves `f'(e_u) = ((2 e_w - 1) C - e_w D) / k`.
//! A worker's choice depends only on the levels above it, so equilibria are
//! computed in a single top-down pass.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::effort::{Clamp, EffortFunction, Root, SchemeParams};
use crate::error::{invalid, Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// Smallest penalty `C = f'(eps) k / (2 eps - 1)` that keeps every level truthful.
pub fn min_penalty_hierarchical(f: &EffortFunction, params: &SchemeParams) -> Result<f64> {
    params.validate()?;
    params.require_binary_epsilon()?;
    let slope = f.deriv(params.epsilon)?;
    Ok(slope * params.k as f64 / (2.0 * params.epsilon - 1.0))
}

/// Penalty part of [`expected_loss_pair`].
pub fn expected_penalty_pair(e_u: f64, e_w: f64, penalty: f64, both_wrong: f64) -> f64 {
    e_u * (1.0 - e_w) * penalty + (1.0 - e_u) * e_w * penalty + e_u * e_w * both_wrong
}

pub fn expected_loss_pair(f: &EffortFunction, e_u: f64, e_w: f64, params: &SchemeParams) -> Result<f64> {
    params.validate()?;
    check_superior(e_w)?;
    let effort = params.k as f64 * f.eval(e_u)?;
    Ok(effort + expected_penalty_pair(e_u, e_w, params.penalty, params.both_wrong_penalty()))
}

fn check_superior(e_w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&e_w) {
        Ok(())
    } else {
        Err(invalid(format!("superior error probability must lie in [0, 1], got {e_w}")))
    }
}

pub fn best_response_under_superior(f: &EffortFunction, e_w: f64, params: &SchemeParams) -> Result<Root> {
    params.validate()?;
    check_superior(e_w)?;
    let target = ((2.0 * e_w - 1.0) * params.penalty - e_w * params.both_wrong_penalty()) / params.k as f64;
    f.solve_deriv_equals(target)
}

/// `sigma` solving `C = f'(sigma) k / (2 eps - 1)`; the worker is proficient
/// iff `sigma <= eps`.
pub fn proficiency_sigma(f: &EffortFunction, params: &SchemeParams) -> Result<Root> {
    params.validate()?;
    params.require_binary_epsilon()?;
    f.solve_deriv_equals(params.penalty * (2.0 * params.epsilon - 1.0) / params.k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    pub level: usize,
    pub error: f64,
    pub truthful: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<Clamp>,
}

/// Per-level equilibrium errors. Level 0 is the supervisor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumProfile {
    pub levels: Vec<LevelState>,
    pub threshold: f64,
}

impl EquilibriumProfile {
    /// Worker levels only (the supervisor's row is excluded).
    pub fn workers(&self) -> &[LevelState] {
        &self.levels[1..]
    }

    pub fn all_truthful(&self) -> bool {
        self.workers().iter().all(|l| l.truthful)
    }

    pub fn max_worker_error(&self) -> f64 {
        self.workers().iter().map(|l| l.error).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn has_clamps(&self) -> bool {
        self.workers().iter().any(|l| l.clamp.is_some())
    }

    pub fn to_csv(&self) -> String {
        levels_csv(&self.levels)
    }
}

fn levels_csv(levels: &[LevelState]) -> String {
    let mut out = String::from("level,error,truthful\n");
    for l in levels {
        let _ = writeln!(out, "{},{},{}", l.level, l.error, l.truthful);
    }
    out
}

fn supervisor_row(e0: f64, epsilon: f64) -> Result<LevelState> {
    check_superior(e0)?;
    Ok(LevelState { level: 0, error: e0, truthful: e0 < epsilon, clamp: None })
}

pub fn equilibrium_homogeneous(
    f: &EffortFunction,
    params: &SchemeParams,
    depth: usize,
    e0: f64,
) -> Result<EquilibriumProfile> {
    params.validate()?;
    if depth < 1 {
        return Err(invalid("depth must be at least 1"));
    }
    let mut levels = Vec::with_capacity(depth + 1);
    levels.push(supervisor_row(e0, params.epsilon)?);
    let mut above = e0;
    for level in 1..=depth {
        let br = best_response_under_superior(f, above, params)?;
        levels.push(LevelState {
            level,
            error: br.value,
            truthful: br.value < params.epsilon,
            clamp: br.clamp,
        });
        above = br.value;
    }
    Ok(EquilibriumProfile { levels, threshold: params.epsilon })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerType {
    pub id: String,
    pub effort: EffortFunction,
}

/// A finite mixture of worker types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationWire", into = "PopulationWire")]
pub struct PopulationModel {
    types: Vec<(WorkerType, f64)>,
}

#[derive(Serialize, Deserialize)]
struct PopulationWire {
    types: Vec<TypeWire>,
}

#[derive(Serialize, Deserialize)]
struct TypeWire {
    id: String,
    effort: EffortFunction,
    weight: f64,
}

impl TryFrom<PopulationWire> for PopulationModel {
    type Error = Error;

    fn try_from(w: PopulationWire) -> Result<Self> {
        PopulationModel::new(
            w.types
                .into_iter()
                .map(|t| (WorkerType { id: t.id, effort: t.effort }, t.weight))
                .collect(),
        )
    }
}

impl From<PopulationModel> for PopulationWire {
    fn from(p: PopulationModel) -> Self {
        PopulationWire {
            types: p
                .types
                .into_iter()
                .map(|(t, weight)| TypeWire { id: t.id, effort: t.effort, weight })
                .collect(),
        }
    }
}

impl PopulationModel {
    pub fn new(types: Vec<(WorkerType, f64)>) -> Result<Self> {
        if types.is_empty() {
            return Err(invalid("population needs at least one type"));
        }
        if types.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("population weights must be non-negative"));
        }
        let total: f64 = types.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(invalid(format!("population weights sum to {total}, not 1")));
        }
        Ok(PopulationModel { types })
    }

    pub fn point_mass(id: impl Into<String>, effort: EffortFunction) -> Self {
        PopulationModel { types: vec![(WorkerType { id: id.into(), effort }, 1.0)] }
    }

    pub fn types(&self) -> &[(WorkerType, f64)] {
        &self.types
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProficiencyCheck {
    pub proficient: bool,
    pub mean_sigma: f64,
    /// Per-type `sigma` in population order.
    pub sigmas: Vec<Root>,
}

/// Checks `E[sigma_f] <= eps` over the mixture.
///
/// A type whose `sigma` lies beyond the top of its domain (upper clamp)
/// contributes `+inf`: the first-order equation has no solution there and the
/// mean cannot be certified.
pub fn population_proficiency_check(pop: &PopulationModel, params: &SchemeParams) -> Result<ProficiencyCheck> {
    let mut sigmas = Vec::with_capacity(pop.types.len());
    let mut mean = 0.0;
    for (t, w) in &pop.types {
        let s = proficiency_sigma(&t.effort, params)?;
        if *w > 0.0 {
            mean += w * if s.clamp == Some(Clamp::Upper) { f64::INFINITY } else { s.value };
        }
        sigmas.push(s);
    }
    Ok(ProficiencyCheck { proficient: mean <= params.epsilon, mean_sigma: mean, sigmas })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeProfile {
    pub id: String,
    pub weight: f64,
    pub sigma: f64,
    pub proficient: bool,
    pub levels: Vec<LevelState>,
}

impl TypeProfile {
    pub fn all_truthful(&self) -> bool {
        self.levels[1..].iter().all(|l| l.truthful)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeterogeneousProfile {
    pub types: Vec<TypeProfile>,
    /// Population-weighted mean error per level, starting with the supervisor.
    pub mean_error: Vec<f64>,
    pub mean_sigma: f64,
    pub threshold: f64,
}

impl HeterogeneousProfile {
    /// Every proficient type is truthful at every level.
    pub fn proficient_types_truthful(&self) -> bool {
        self.types.iter().filter(|t| t.proficient).all(TypeProfile::all_truthful)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("type,level,error,truthful\n");
        for t in &self.types {
            for l in &t.levels {
                let _ = writeln!(out, "{},{},{},{}", t.id, l.level, l.error, l.truthful);
            }
        }
        out
    }
}

/// Interim Bayes-Nash equilibrium for a mixed population.
///
/// A worker does not know its superior's type, so it best-responds to the
/// population-weighted mean of the level above. Populations failing the
/// proficiency-on-average condition are rejected.
pub fn equilibrium_heterogeneous(
    pop: &PopulationModel,
    params: &SchemeParams,
    depth: usize,
    e0: f64,
) -> Result<HeterogeneousProfile> {
    params.validate()?;
    if depth < 1 {
        return Err(invalid("depth must be at least 1"));
    }
    let check = population_proficiency_check(pop, params)?;
    if !check.proficient {
        return Err(Error::PopulationNotProficient { mean_sigma: check.mean_sigma, epsilon: params.epsilon });
    }
    let top = supervisor_row(e0, params.epsilon)?;
    let mut types: Vec<TypeProfile> = pop
        .types
        .iter()
        .zip(&check.sigmas)
        .map(|((t, w), s)| TypeProfile {
            id: t.id.clone(),
            weight: *w,
            sigma: s.value,
            proficient: s.clamp != Some(Clamp::Upper) && s.value <= params.epsilon,
            levels: vec![top],
        })
        .collect();
    let mut mean_error = vec![e0];
    let mut above = e0;
    for level in 1..=depth {
        let mut mean = 0.0;
        for (profile, (t, w)) in types.iter_mut().zip(&pop.types) {
            let br = best_response_under_superior(&t.effort, above, params)?;
            profile.levels.push(LevelState {
                level,
                error: br.value,
                truthful: br.value < params.epsilon,
                clamp: br.clamp,
            });
            mean += w * br.value;
        }
        mean_error.push(mean);
        above = mean;
    }
    Ok(HeterogeneousProfile { types, mean_error, mean_sigma: check.mean_sigma, threshold: params.epsilon })
}

/// Level-by-level trace of the recursion `e_t = k / ((1 - 2 e_{t-1}) C)`
/// obtained with `f(x) = -ln x` and two possible answers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleTrace {
    /// `errors[t]` is `e_t`; `errors[0] = 0` is the exact supervisor.
    pub errors: Vec<f64>,
    pub epsilon: f64,
    pub bound: f64,
    /// First level with `e_t > eps`.
    pub crossing: Option<usize>,
    /// Per-step lower bound `a^2 delta / (k - a delta)`; present when `C < bound`.
    pub delta: Option<f64>,
    /// `ceil(eps / delta)`, the level by which a crossing is guaranteed.
    pub guaranteed_depth: Option<usize>,
    /// The recursion left `[0, 1/2)`.
    pub diverged: bool,
}

impl CounterexampleTrace {
    pub fn to_csv(&self) -> String {
        let levels: Vec<LevelState> = self
            .errors
            .iter()
            .enumerate()
            .map(|(level, &error)| LevelState { level, error, truthful: error < self.epsilon, clamp: None })
            .collect();
        levels_csv(&levels)
    }
}

pub fn counterexample_trace(params: &SchemeParams, max_depth: usize) -> Result<CounterexampleTrace> {
    params.validate()?;
    let eps = params.epsilon;
    if !(eps > 0.0 && eps < 0.25) {
        return Err(invalid(format!("the counterexample needs epsilon in (0, 1/4), got {eps}")));
    }
    let k = params.k as f64;
    let c = params.penalty;
    let a = eps * (1.0 - 2.0 * eps);
    // f'(eps) = -1/eps for f = -ln x
    let bound = k / a;
    let (delta, guaranteed_depth) = if c < bound {
        let d = bound - c;
        let step = a * a * d / (k - a * d);
        (Some(step), Some((eps / step).ceil() as usize))
    } else {
        (None, None)
    };

    let mut errors = Vec::with_capacity(max_depth.min(1 << 16) + 1);
    errors.push(0.0);
    let mut crossing = None;
    let mut diverged = false;
    let mut prev = 0.0;
    for t in 1..=max_depth {
        let denom = (1.0 - 2.0 * prev) * c;
        if denom <= 0.0 {
            diverged = true;
            break;
        }
        let e = k / denom;
        errors.push(e);
        if e >= 0.5 {
            diverged = true;
        }
        if e > eps {
            crossing = Some(t);
            break;
        }
        prev = e;
    }
    Ok(CounterexampleTrace { errors, epsilon: eps, bound, crossing, delta, guaranteed_depth, diverged })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Defect,
    Indifferent,
    NoDefect,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DefectionAnalysis {
    /// Cost bound for playing the constant answer: `k C / N`.
    pub constant_cost: f64,
    /// Cost of deviating from the defectors: `(N - k) C / N`.
    pub deviation_cost: f64,
    pub verdict: Verdict,
}

impl std::fmt::Display for DefectionAnalysis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.verdict {
            Verdict::Defect => write!(f, "defect ({:?} < {:?})", self.constant_cost, self.deviation_cost),
            Verdict::Indifferent => {
                write!(f, "indifferent ({:?} = {:?})", self.constant_cost, self.deviation_cost)
            }
            Verdict::NoDefect => write!(f, "no-defect ({:?} > {:?})", self.constant_cost, self.deviation_cost),
        }
    }
}

/// Workers who do not know their level, facing a crowd that always reports
/// the same answer: defecting wins when `N > 2k`.
pub fn defection_analysis(n: u64, k: u64, penalty: f64) -> Result<DefectionAnalysis> {
    if k < 1 || n <= k {
        return Err(invalid(format!("defection analysis needs N > k >= 1, got N={n}, k={k}")));
    }
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(invalid("penalty C must be positive"));
    }
    let nf = n as f64;
    let constant_cost = k as f64 * penalty / nf;
    let deviation_cost = (n - k) as f64 * penalty / nf;
    let verdict = match n.cmp(&(2 * k)) {
        std::cmp::Ordering::Greater => Verdict::Defect,
        std::cmp::Ordering::Equal => Verdict::Indifferent,
        std::cmp::Ordering::Less => Verdict::NoDefect,
    };
    Ok(DefectionAnalysis { constant_cost, deviation_cost, verdict })
}

/// Bits needed to tell a worker its level in a `k`-ary hierarchy over `n`
/// workers: `ceil(log2(max(1, ceil(log_k n))))`, which is `O(log log n)`.
pub fn level_info_bits(n: u64, k: u64) -> Result<u32> {
    if n < 1 || k < 2 {
        return Err(invalid(format!("level_info_bits needs N >= 1 and k >= 2, got N={n}, k={k}")));
    }
    let mut levels: u64 = 0;
    let mut reach: u128 = 1;
    while reach < n as u128 {
        reach *= k as u128;
        levels += 1;
    }
    let levels = levels.max(1);
    let mut bits = 0;
    while (1u128 << bits) < levels as u128 {
        bits += 1;
    }
    Ok(bits)
}

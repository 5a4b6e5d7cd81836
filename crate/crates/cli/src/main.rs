use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use supervise_core::allocation::{read_cover, sa_exact, sa_greedy, sa_random_edge, SAInstance, EXACT_MAX_TASKS};
use supervise_core::binary::{
    counterexample_trace, defection_analysis, equilibrium_heterogeneous, equilibrium_homogeneous, level_info_bits,
    min_penalty_hierarchical, PopulationModel,
};
use supervise_core::flat::{min_verification_probability_binary, min_verification_probability_quant};
use supervise_core::quant::{best_response_quant, quant_equilibrium, QuantWorkerType};
use supervise_core::sim::{simulate, SimConfig, SimStructure, Strategies};
use supervise_core::structure::{
    build_peg_assignment, build_supervision_hierarchy, build_supervision_tree, AssignmentGraph, CoverMode,
    PegAssignment, SupervisionHierarchy, SupervisionTree,
};
use supervise_core::{EffortFamily, EffortFunction, SchemeParams};

#[derive(Parser)]
#[command(name = "supervise", version, about = "Incentive thresholds, supervision structures and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Penalty or audit-rate threshold for truthful effort
    Threshold {
        #[command(subcommand)]
        scheme: Threshold,
    },
    /// Per-level equilibrium error profile as CSV
    Equilibrium(EquilibriumArgs),
    /// Error trace of the under-penalized chain
    Counterexample(CounterexampleArgs),
    /// Compare constant-answer defection with deviating from it
    Defection {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long = "C")]
        penalty: f64,
    },
    /// Bits a worker needs to learn its level
    InfoBits {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        k: u64,
    },
    /// Build a supervision tree or print its worker views
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Build a k-regular assignment with peg tasks
    Peg {
        #[command(subcommand)]
        action: PegAction,
    },
    /// Hang an assignment graph under a tree over a task cover
    Hierarchy {
        #[command(subcommand)]
        action: HierarchyAction,
    },
    /// Choose the tasks a supervisor verifies
    Allocate(AllocateArgs),
    /// Monte Carlo losses over a structure, as CSV
    Simulate(SimulateArgs),
    /// Re-read a JSON file and check its invariants
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct EffortArgs {
    /// simplelog, boundarylog or inversepower
    #[arg(long, default_value = "simplelog")]
    effort: EffortFamily,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

impl EffortArgs {
    fn function(&self) -> supervise_core::Result<EffortFunction> {
        EffortFunction::new(self.effort, self.alpha)
    }
}

#[derive(Subcommand)]
enum Threshold {
    /// Smallest penalty C keeping every level of a hierarchy truthful
    Binary {
        #[command(flatten)]
        effort: EffortArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        k: u32,
    },
    /// Equilibrium expected error v* under penalty c
    Quant {
        #[command(flatten)]
        effort: EffortArgs,
        #[arg(long)]
        k: u32,
        #[arg(long = "c")]
        c: f64,
        /// Also report whether v* is below this threshold
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Smallest audit probability for one-level supervision
    Flat {
        #[command(flatten)]
        effort: EffortArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        k: u32,
        #[arg(long = "C", conflicts_with = "c", required_unless_present = "c")]
        penalty: Option<f64>,
        /// Quantitative penalty; switches to the variance model
        #[arg(long = "c")]
        c: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Binary,
    Quant,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[arg(long, value_enum, default_value = "binary")]
    model: Model,
    #[command(flatten)]
    effort: EffortArgs,
    #[arg(long)]
    depth: usize,
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// Binary penalty
    #[arg(long = "C")]
    penalty: Option<f64>,
    /// Quantitative penalty
    #[arg(long = "c")]
    c: Option<f64>,
    #[arg(long)]
    epsilon: f64,
    /// Supervisor error probability
    #[arg(long, default_value_t = 0.0)]
    e0: f64,
    #[arg(long, default_value_t = 2)]
    answers: u32,
    /// Both-wrong penalty override
    #[arg(long = "D")]
    both_wrong: Option<f64>,
    /// Population JSON; replaces --effort/--alpha
    #[arg(long)]
    population: Option<PathBuf>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    k: u32,
    #[arg(long = "C")]
    penalty: f64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_depth: usize,
    /// Write the CSV here and print only the summary
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TreeAction {
    Build {
        #[arg(long)]
        tasks: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, env = "SUPERVISE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Level and tasks of each worker, nothing else
    Views {
        #[arg(long)]
        tree: PathBuf,
    },
}

#[derive(Subcommand)]
enum PegAction {
    Build {
        #[arg(long)]
        workers: usize,
        #[arg(long)]
        tasks: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, env = "SUPERVISE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum HierarchyAction {
    Build {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, env = "SUPERVISE_SEED", default_value_t = 0)]
        seed: u64,
        /// Pick the tree's tasks with the exact solver
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AllocMode {
    Exact,
    Greedy,
    RandomEdge,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long, value_enum, default_value = "greedy")]
    mode: AllocMode,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, env = "SUPERVISE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    strategies: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    episodes: u64,
    #[arg(long, env = "SUPERVISE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Tree,
    Graph,
    Peg,
    Hierarchy,
    Cover,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    file: PathBuf,
    /// Branching bound for trees and hierarchies
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Core(supervise_core::Error),
    Io(PathBuf, std::io::Error),
}

impl Failure {
    fn line(&self) -> String {
        match self {
            Failure::Core(e) => format!("error: {}: {e}", e.kind()),
            Failure::Io(p, e) => format!("error: io: {}: {e}", p.display()),
        }
    }
}

impl From<supervise_core::Error> for Failure {
    fn from(e: supervise_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    Ok(serde_json::from_str(&read(path)?)?)
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(p.to_path_buf(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Io("<stdout>".into(), e))
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn threshold(scheme: Threshold) -> Outcome {
    match scheme {
        Threshold::Binary { effort, epsilon, k } => {
            let params = SchemeParams::new(k, 1.0, epsilon)?;
            println!("{}", min_penalty_hierarchical(&effort.function()?, &params)?);
        }
        Threshold::Quant { effort, k, c, epsilon } => {
            let v = best_response_quant(&effort.function()?, k, c)?;
            println!("{}", v.value);
            if let Some(eps) = epsilon {
                println!("truthful={}", v.value < eps);
            }
        }
        Threshold::Flat { effort, epsilon, k, penalty, c } => {
            let f = effort.function()?;
            let bound = match (penalty, c) {
                (Some(pen), _) => min_verification_probability_binary(&f, &SchemeParams::new(k, pen, epsilon)?)?,
                (None, Some(c)) => {
                    min_verification_probability_quant(&f, &SchemeParams::new(k, c, epsilon)?.with_quant_penalty(c)?)?
                }
                (None, None) => unreachable!("clap requires --C or --c"),
            };
            println!("{}", bound.bound);
            println!("feasible={}", bound.feasible);
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct QuantPopulation {
    types: Vec<QuantWorkerType>,
}

fn equilibrium(a: EquilibriumArgs) -> Outcome {
    match a.model {
        Model::Binary => {
            let pen = a.penalty.ok_or_else(|| missing("--C is required for the binary model"))?;
            let mut params = SchemeParams::new(a.k, pen, a.epsilon)?.with_answers(a.answers)?;
            if let Some(d) = a.both_wrong {
                params = params.with_both_wrong(d)?;
            }
            let csv = match &a.population {
                Some(p) => {
                    let pop: PopulationModel = read_json(p)?;
                    equilibrium_heterogeneous(&pop, &params, a.depth, a.e0)?.to_csv()
                }
                None => equilibrium_homogeneous(&a.effort.function()?, &params, a.depth, a.e0)?.to_csv(),
            };
            emit(None, &csv)
        }
        Model::Quant => {
            let c = a.c.or(a.penalty).ok_or_else(|| missing("--c is required for the quantitative model"))?;
            let types = match &a.population {
                Some(p) => read_json::<QuantPopulation>(p)?.types,
                None => vec![QuantWorkerType { id: "all".into(), effort: a.effort.function()?, bias: 0.0, weight: 1.0 }],
            };
            let mut csv = String::from("type,level,vstar,truthful\n");
            for prof in quant_equilibrium(&types, a.k, c, a.epsilon, a.depth)? {
                for l in &prof.levels {
                    csv.push_str(&format!("{},{},{},{}\n", prof.id, l.level, l.vstar, l.truthful));
                }
            }
            emit(None, &csv)
        }
    }
}

fn missing(msg: &str) -> Failure {
    Failure::Core(supervise_core::Error::InvalidParams(msg.into()))
}

fn counterexample(a: CounterexampleArgs) -> Outcome {
    let params = SchemeParams::new(a.k, a.penalty, a.epsilon)?;
    let tr = counterexample_trace(&params, a.max_depth)?;
    let show = |x: Option<f64>| x.map_or("none".to_string(), |v| v.to_string());
    let mut summary = format!(
        "crossing_level={}\ndelta={}\nbound={}\n",
        tr.crossing.map_or("none".to_string(), |c| c.to_string()),
        show(tr.delta),
        tr.bound,
    );
    if let Some(g) = tr.guaranteed_depth {
        summary.push_str(&format!("guaranteed_depth={g}\n"));
    }
    if tr.diverged {
        summary.push_str("diverged=true\n");
    }
    match &a.out {
        Some(p) => {
            emit(Some(p), &tr.to_csv())?;
            emit(None, &summary)
        }
        None => emit(None, &(tr.to_csv() + &summary)),
    }
}

fn allocate(a: AllocateArgs) -> Outcome {
    let graph: AssignmentGraph = read_json(&a.graph)?;
    let inst = SAInstance::new(graph)?;
    let sol = match a.mode {
        AllocMode::Exact => sa_exact(&inst)?,
        AllocMode::Greedy => sa_greedy(&inst, a.seed),
        AllocMode::RandomEdge => sa_random_edge(&inst, a.seed),
    };
    let mut doc: serde_json::Value = serde_json::from_str(&sol.to_json(&inst)?)?;
    doc["size"] = sol.size().into();
    if inst.graph().tasks().len() <= EXACT_MAX_TASKS {
        let opt = sa_exact(&inst)?.size();
        doc["optimum"] = opt.into();
        doc["ratio"] = if opt == 0 { 1.0 } else { sol.size() as f64 / opt as f64 }.into();
    }
    emit(a.out.as_deref(), &json_line(&doc)?)
}

fn run_simulation(a: SimulateArgs) -> Outcome {
    let structure = SimStructure::from_json(&read(&a.structure)?)?;
    let strategies: Strategies = read_json(&a.strategies)?;
    let report = simulate(&structure, &strategies, &SimConfig::new(a.episodes, a.seed)?)?;
    emit(a.out.as_deref(), &report.to_csv())
}

fn validate(a: ValidateArgs) -> Outcome {
    let text = read(&a.file)?;
    match a.kind {
        Kind::Tree => {
            let t: SupervisionTree = serde_json::from_str(&text)?;
            if let Some(k) = a.k {
                t.validate(k)?;
            }
        }
        Kind::Graph => {
            serde_json::from_str::<AssignmentGraph>(&text)?;
        }
        Kind::Peg => {
            serde_json::from_str::<PegAssignment>(&text)?;
        }
        Kind::Hierarchy => {
            let h: SupervisionHierarchy = serde_json::from_str(&text)?;
            h.validate(a.k)?;
        }
        Kind::Cover => {
            let (inst, sol) = read_cover(&text)?;
            if !sol.is_valid_for(&inst) {
                return Err(supervise_core::Error::InvalidStructure("cover misses a worker".into()).into());
            }
        }
    }
    println!("ok");
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Threshold { scheme } => threshold(scheme),
        Command::Equilibrium(a) => equilibrium(a),
        Command::Counterexample(a) => counterexample(a),
        Command::Defection { n, k, penalty } => {
            println!("{}", defection_analysis(n, k, penalty)?);
            Ok(())
        }
        Command::InfoBits { n, k } => {
            println!("{}", level_info_bits(n, k)?);
            Ok(())
        }
        Command::Tree { action: TreeAction::Build { tasks, k, seed, out } } => {
            emit(out.as_deref(), &json_line(&build_supervision_tree(tasks, k, seed)?)?)
        }
        Command::Tree { action: TreeAction::Views { tree } } => {
            let t: SupervisionTree = read_json(&tree)?;
            emit(None, &json_line(&t.worker_views())?)
        }
        Command::Peg { action: PegAction::Build { workers, tasks, k, seed, out } } => {
            emit(out.as_deref(), &json_line(&build_peg_assignment(workers, tasks, k, seed)?)?)
        }
        Command::Hierarchy { action: HierarchyAction::Build { graph, k, seed, exact, out } } => {
            let g: AssignmentGraph = read_json(&graph)?;
            let mode = if exact { CoverMode::Exact } else { CoverMode::Greedy };
            emit(out.as_deref(), &json_line(&build_supervision_hierarchy(g, k, seed, mode)?)?)
        }
        Command::Allocate(a) => allocate(a),
        Command::Simulate(a) => run_simulation(a),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::debug!("{f:?}");
            eprintln!("{}", f.line());
            ExitCode::from(1)
        }
    }
}

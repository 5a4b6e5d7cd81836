use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::node::Node;
use crate::error::{invalid, Error, Result};

/// Bipartite worker-task assignment `G = (U + I, E)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphWire", into = "GraphWire")]
pub struct AssignmentGraph {
    workers: Vec<u32>,
    tasks: Vec<u32>,
    edges: BTreeSet<(u32, u32)>,
    worker_tasks: BTreeMap<u32, Vec<u32>>,
    task_workers: BTreeMap<u32, Vec<u32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct GraphWire {
    workers: Vec<Node>,
    tasks: Vec<Node>,
    edges: Vec<(Node, Node)>,
}

impl TryFrom<GraphWire> for AssignmentGraph {
    type Error = Error;

    fn try_from(w: GraphWire) -> Result<Self> {
        let workers = w
            .workers
            .iter()
            .map(|n| n.worker_id().ok_or_else(|| invalid(format!("{n} listed as a worker"))))
            .collect::<Result<Vec<_>>>()?;
        let tasks = w
            .tasks
            .iter()
            .map(|n| n.task_id().ok_or_else(|| invalid(format!("{n} listed as a task"))))
            .collect::<Result<Vec<_>>>()?;
        let edges = w
            .edges
            .iter()
            .map(|(a, b)| match (a, b) {
                (Node::Worker(u), Node::Task(t)) => Ok((*u, *t)),
                _ => Err(invalid(format!("edge [{a}, {b}] is not worker -> task"))),
            })
            .collect::<Result<Vec<_>>>()?;
        AssignmentGraph::new(workers, tasks, edges)
    }
}

impl From<AssignmentGraph> for GraphWire {
    fn from(g: AssignmentGraph) -> Self {
        GraphWire {
            workers: g.workers.iter().map(|&w| Node::Worker(w)).collect(),
            tasks: g.tasks.iter().map(|&t| Node::Task(t)).collect(),
            edges: g.edges.iter().map(|&(w, t)| (Node::Worker(w), Node::Task(t))).collect(),
        }
    }
}

impl AssignmentGraph {
    pub fn new(mut workers: Vec<u32>, mut tasks: Vec<u32>, edges: Vec<(u32, u32)>) -> Result<Self> {
        workers.sort_unstable();
        tasks.sort_unstable();
        if workers.windows(2).any(|p| p[0] == p[1]) {
            return Err(invalid("duplicate worker id"));
        }
        if tasks.windows(2).any(|p| p[0] == p[1]) {
            return Err(invalid("duplicate task id"));
        }
        let mut set = BTreeSet::new();
        let mut worker_tasks: BTreeMap<u32, Vec<u32>> = workers.iter().map(|&w| (w, Vec::new())).collect();
        let mut task_workers: BTreeMap<u32, Vec<u32>> = tasks.iter().map(|&t| (t, Vec::new())).collect();
        for (w, t) in edges {
            if !set.insert((w, t)) {
                return Err(invalid(format!("duplicate edge (w{w}, t{t})")));
            }
            worker_tasks
                .get_mut(&w)
                .ok_or_else(|| invalid(format!("edge references unknown worker w{w}")))?
                .push(t);
            task_workers
                .get_mut(&t)
                .ok_or_else(|| invalid(format!("edge references unknown task t{t}")))?
                .push(w);
        }
        for v in worker_tasks.values_mut().chain(task_workers.values_mut()) {
            v.sort_unstable();
        }
        Ok(AssignmentGraph { workers, tasks, edges: set, worker_tasks, task_workers })
    }

    pub fn workers(&self) -> &[u32] {
        &self.workers
    }

    pub fn tasks(&self) -> &[u32] {
        &self.tasks
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, worker: u32, task: u32) -> bool {
        self.edges.contains(&(worker, task))
    }

    pub fn tasks_of(&self, worker: u32) -> &[u32] {
        self.worker_tasks.get(&worker).map_or(&[], Vec::as_slice)
    }

    pub fn workers_of(&self, task: u32) -> &[u32] {
        self.task_workers.get(&task).map_or(&[], Vec::as_slice)
    }

    pub fn max_worker_degree(&self) -> usize {
        self.worker_tasks.values().map(Vec::len).max().unwrap_or(0)
    }

    /// Smallest and largest number of workers on a task.
    pub fn multiplicity_range(&self) -> (usize, usize) {
        let m = self.task_workers.values().map(Vec::len);
        (m.clone().min().unwrap_or(0), m.max().unwrap_or(0))
    }

    pub fn is_worker_regular(&self, k: usize) -> bool {
        self.worker_tasks.values().all(|t| t.len() == k)
    }
}

/// A worker-regular assignment plus its peg tasks, whose worker sets are
/// pairwise disjoint and together contain every worker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PegWire", into = "PegWire")]
pub struct PegAssignment {
    pub graph: AssignmentGraph,
    pub pegs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PegWire {
    #[serde(flatten)]
    graph: GraphWire,
    pegs: Vec<Node>,
}

impl TryFrom<PegWire> for PegAssignment {
    type Error = Error;

    fn try_from(w: PegWire) -> Result<Self> {
        let graph = AssignmentGraph::try_from(w.graph)?;
        let pegs = w
            .pegs
            .iter()
            .map(|n| n.task_id().ok_or_else(|| invalid(format!("peg {n} is not a task"))))
            .collect::<Result<Vec<_>>>()?;
        let p = PegAssignment { graph, pegs };
        p.validate()?;
        Ok(p)
    }
}

impl From<PegAssignment> for PegWire {
    fn from(p: PegAssignment) -> Self {
        PegWire { graph: p.graph.into(), pegs: p.pegs.iter().map(|&t| Node::Task(t)).collect() }
    }
}

impl PegAssignment {
    /// Pegs partition the workers.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &peg in &self.pegs {
            if self.graph.tasks().binary_search(&peg).is_err() {
                return Err(Error::InvalidStructure(format!("peg t{peg} is not a task")));
            }
            for &w in self.graph.workers_of(peg) {
                if !seen.insert(w) {
                    return Err(Error::InvalidStructure(format!("w{w} sits on two peg tasks")));
                }
            }
        }
        if seen.len() != self.graph.workers().len() {
            return Err(Error::InvalidStructure("peg tasks do not cover every worker".into()));
        }
        Ok(())
    }
}

/// Builds a `k`-regular assignment around `ceil(n_workers / k)` peg tasks.
///
/// Every worker gets one peg task and `k - 1` further tasks, handed out to
/// the currently least-loaded non-peg tasks. Task multiplicity stays at most
/// `k`, so no set of fewer than `ceil(n_workers / k)` tasks covers all
/// workers and the pegs are an optimal verification set.
pub fn build_peg_assignment(n_workers: usize, n_tasks: usize, k: usize, seed: u64) -> Result<PegAssignment> {
    if k < 1 || n_workers < 1 {
        return Err(Error::Sizing("need at least one worker and k >= 1".into()));
    }
    let n_pegs = n_workers.div_ceil(k);
    if n_tasks < n_pegs {
        return Err(Error::Sizing(format!(
            "{n_workers} workers with k = {k} need at least {n_pegs} tasks for the pegs, got {n_tasks}"
        )));
    }
    let fill = n_tasks - n_pegs;
    // each worker needs k - 1 distinct fill tasks, each fill task takes at most k workers
    let min_fill = (k - 1).max((n_workers * (k - 1)).div_ceil(k));
    if fill < min_fill {
        return Err(Error::Sizing(format!(
            "{n_workers} workers with k = {k} need at least {} tasks, got {n_tasks}",
            n_pegs + min_fill
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut workers: Vec<u32> = (0..n_workers as u32).collect();
    let mut tasks: Vec<u32> = (0..n_tasks as u32).collect();
    workers.shuffle(&mut rng);
    tasks.shuffle(&mut rng);
    let (pegs, others) = tasks.split_at(n_pegs);

    let mut edges = Vec::with_capacity(n_workers * k);
    for (peg, group) in pegs.iter().zip(workers.chunks(k)) {
        edges.extend(group.iter().map(|&w| (w, *peg)));
    }
    let mut load = vec![0usize; others.len()];
    let mut order: Vec<usize> = (0..others.len()).collect();
    for &w in &workers {
        order.sort_by_key(|&i| (load[i], i));
        for &i in &order[..k - 1] {
            load[i] += 1;
            edges.push((w, others[i]));
        }
    }
    let mut pegs = pegs.to_vec();
    pegs.sort_unstable();
    let graph = AssignmentGraph::new((0..n_workers as u32).collect(), (0..n_tasks as u32).collect(), edges)?;
    let out = PegAssignment { graph, pegs };
    out.validate()?;
    Ok(out)
}

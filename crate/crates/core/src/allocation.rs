//! Supervisor Assignment: the smallest set of tasks whose verification
//! touches every worker.
//!
//! SA is vertex cover on the hypergraph whose vertices are tasks and whose
//! hyperedges are the workers' task sets, so it is NP-hard; with worker
//! degree at most `k` the greedy below is a `k`-approximation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::structure::graph::GraphWire;
use crate::structure::{AssignmentGraph, Node};

pub const EXACT_MAX_TASKS: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SAInstance {
    graph: AssignmentGraph,
    k: usize,
}

impl SAInstance {
    /// Uses the largest worker degree as `k`.
    pub fn new(graph: AssignmentGraph) -> Result<Self> {
        let k = graph.max_worker_degree();
        Self::with_max_degree(graph, k)
    }

    pub fn with_max_degree(graph: AssignmentGraph, k: usize) -> Result<Self> {
        for &w in graph.workers() {
            let d = graph.tasks_of(w).len();
            if d == 0 {
                return Err(Error::UncoveredWorker(Node::Worker(w).to_string()));
            }
            if d > k {
                return Err(invalid(format!("w{w} has {d} tasks, more than k = {k}")));
            }
        }
        Ok(SAInstance { graph, k })
    }

    pub fn graph(&self) -> &AssignmentGraph {
        &self.graph
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SASolution {
    /// Selected tasks, ascending.
    pub tasks: Vec<u32>,
    /// For every worker, the smallest selected task it performs.
    pub cover_witness: BTreeMap<u32, u32>,
}

impl SASolution {
    pub fn from_tasks(inst: &SAInstance, tasks: impl IntoIterator<Item = u32>) -> Result<Self> {
        let tasks: Vec<u32> = tasks.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let chosen: BTreeSet<u32> = tasks.iter().copied().collect();
        let mut cover_witness = BTreeMap::new();
        for &w in inst.graph.workers() {
            let t = inst
                .graph
                .tasks_of(w)
                .iter()
                .copied()
                .find(|t| chosen.contains(t))
                .ok_or_else(|| Error::UncoveredWorker(Node::Worker(w).to_string()))?;
            cover_witness.insert(w, t);
        }
        Ok(SASolution { tasks, cover_witness })
    }

    pub fn size(&self) -> usize {
        self.tasks.len()
    }

    /// Witness covers every worker through an existing edge to a selected task.
    pub fn is_valid_for(&self, inst: &SAInstance) -> bool {
        inst.graph.workers().iter().all(|w| {
            self.cover_witness
                .get(w)
                .is_some_and(|t| self.tasks.binary_search(t).is_ok() && inst.graph.has_edge(*w, *t))
        })
    }

    /// The instance graph plus `"cover"`.
    pub fn to_json(&self, inst: &SAInstance) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct CoverOut {
            #[serde(flatten)]
            graph: GraphWire,
            cover: Vec<Node>,
        }
        serde_json::to_string_pretty(&CoverOut {
            graph: inst.graph.clone().into(),
            cover: self.tasks.iter().map(|&t| Node::Task(t)).collect(),
        })
    }
}

/// Reads a cover file written by [`SASolution::to_json`].
pub fn read_cover(json: &str) -> Result<(SAInstance, SASolution)> {
    #[derive(Deserialize)]
    struct CoverIn {
        #[serde(flatten)]
        graph: GraphWire,
        cover: Vec<Node>,
    }
    let raw: CoverIn = serde_json::from_str(json)?;
    let inst = SAInstance::new(AssignmentGraph::try_from(raw.graph)?)?;
    let tasks = raw
        .cover
        .iter()
        .map(|n| n.task_id().ok_or_else(|| invalid(format!("cover entry {n} is not a task"))))
        .collect::<Result<Vec<_>>>()?;
    let sol = SASolution::from_tasks(&inst, tasks)?;
    Ok((inst, sol))
}

/// Minimum-cardinality cover by exhaustive search in increasing size; among
/// optimal covers the lexicographically smallest (by task id) is returned.
pub fn sa_exact(inst: &SAInstance) -> Result<SASolution> {
    let tasks = inst.graph.tasks();
    if tasks.len() > EXACT_MAX_TASKS {
        return Err(Error::InstanceTooLarge { tasks: tasks.len(), max: EXACT_MAX_TASKS });
    }
    let index: BTreeMap<u32, usize> = tasks.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let masks: Vec<u32> = inst
        .graph
        .workers()
        .iter()
        .map(|&w| inst.graph.tasks_of(w).iter().fold(0u32, |m, t| m | 1 << index[t]))
        .collect();
    if masks.is_empty() {
        return SASolution::from_tasks(inst, []);
    }
    let n = tasks.len();
    let mut chosen = Vec::with_capacity(n);
    for size in 1..=n {
        if search(&masks, n, 0, size, 0, &mut chosen) {
            return SASolution::from_tasks(inst, chosen.iter().map(|&i| tasks[i]));
        }
    }
    unreachable!("selecting every task covers every worker with a task")
}

fn search(masks: &[u32], n: usize, start: usize, left: usize, acc: u32, chosen: &mut Vec<usize>) -> bool {
    // the first uncovered worker must still be reachable from tasks >= start
    let Some(&open) = masks.iter().find(|&&m| m & acc == 0) else {
        return true;
    };
    if left == 0 || open >> start == 0 {
        return false;
    }
    for i in start..=n - left {
        chosen.push(i);
        if search(masks, n, i + 1, left - 1, acc | 1 << i, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}

/// Maximal disjoint hyperedges: take uncovered workers in random order and
/// select all of each one's tasks. The picked workers have pairwise disjoint
/// task sets, so any cover needs one task per pick and `|S| <= k |OPT|`.
pub fn sa_greedy(inst: &SAInstance, seed: u64) -> SASolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = inst.graph.workers().to_vec();
    order.shuffle(&mut rng);
    let mut covered = BTreeSet::new();
    let mut picked = BTreeSet::new();
    for w in order {
        if covered.contains(&w) {
            continue;
        }
        for &t in inst.graph.tasks_of(w) {
            picked.insert(t);
            covered.extend(inst.graph.workers_of(t).iter().copied());
        }
    }
    SASolution::from_tasks(inst, picked).expect("every worker has a task, so the greedy covers it")
}

/// Edge-picking variant: take a random remaining edge `(worker, task)`,
/// select the task and delete every edge at that task or that worker. Always
/// a cover; no approximation ratio is claimed.
pub fn sa_random_edge(inst: &SAInstance, seed: u64) -> SASolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(u32, u32)> = inst.graph.edges().collect();
    let mut picked = BTreeSet::new();
    while !edges.is_empty() {
        let (w, t) = edges[rng.random_range(0..edges.len())];
        picked.insert(t);
        edges.retain(|&(ew, et)| ew != w && et != t);
    }
    SASolution::from_tasks(inst, picked).expect("removing a worker's last edge selects one of its tasks")
}

/// Incidence-graph reduction from vertex cover: every edge becomes a worker
/// assigned to its two endpoint tasks. Isolated vertices constrain nothing
/// and are dropped.
pub fn vc_to_sa(n_vertices: u32, edges: &[(u32, u32)]) -> Result<SAInstance> {
    let mut seen = BTreeSet::new();
    for &(a, b) in edges {
        if a == b {
            return Err(invalid(format!("self-loop at vertex {a}")));
        }
        if a >= n_vertices || b >= n_vertices {
            return Err(invalid(format!("edge ({a}, {b}) references a missing vertex")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(invalid(format!("duplicate edge ({a}, {b})")));
        }
    }
    let used: BTreeSet<u32> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let isolated = n_vertices as usize - used.len();
    if isolated > 0 {
        log::warn!("dropping {isolated} isolated vertices from the reduction");
    }
    let graph = AssignmentGraph::new(
        (0..edges.len() as u32).collect(),
        used.into_iter().collect(),
        edges.iter().enumerate().flat_map(|(i, &(a, b))| [(i as u32, a), (i as u32, b)]).collect(),
    )?;
    SAInstance::with_max_degree(graph, 2)
}

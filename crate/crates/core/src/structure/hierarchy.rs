use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::AssignmentGraph;
use super::node::Node;
use super::tree::{build_over_tasks, SupervisionTree, WorkerView};
use crate::allocation::{sa_exact, sa_greedy, SAInstance};
use crate::error::{Error, Result};

/// How the tree's task set is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoverMode {
    #[default]
    Greedy,
    Exact,
}

/// A redundant assignment graph hung below a supervision tree built over a
/// covering subset of its tasks. Tree workers are numbered after the graph's
/// workers so the two sets never collide.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyWire", into = "HierarchyWire")]
pub struct SupervisionHierarchy {
    graph: AssignmentGraph,
    tree: SupervisionTree,
    tree_tasks: Vec<u32>,
    coverage: BTreeMap<u32, u32>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyWire {
    graph: AssignmentGraph,
    tree: SupervisionTree,
    tree_tasks: Vec<Node>,
    coverage: BTreeMap<Node, Node>,
}

impl TryFrom<HierarchyWire> for SupervisionHierarchy {
    type Error = Error;

    fn try_from(w: HierarchyWire) -> Result<Self> {
        let bad = |n: &Node, what: &str| Error::InvalidStructure(format!("{n} is not a {what}"));
        let tree_tasks = w.tree_tasks.iter().map(|n| n.task_id().ok_or_else(|| bad(n, "task"))).collect::<Result<_>>()?;
        let coverage = w
            .coverage
            .iter()
            .map(|(u, t)| Ok((u.worker_id().ok_or_else(|| bad(u, "worker"))?, t.task_id().ok_or_else(|| bad(t, "task"))?)))
            .collect::<Result<_>>()?;
        let h = SupervisionHierarchy { graph: w.graph, tree: w.tree, tree_tasks, coverage };
        h.validate(None)?;
        Ok(h)
    }
}

impl From<SupervisionHierarchy> for HierarchyWire {
    fn from(h: SupervisionHierarchy) -> Self {
        HierarchyWire {
            graph: h.graph,
            tree: h.tree,
            tree_tasks: h.tree_tasks.iter().map(|&t| Node::Task(t)).collect(),
            coverage: h.coverage.iter().map(|(&u, &t)| (Node::Worker(u), Node::Task(t))).collect(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidStructure(msg.into())
}

impl SupervisionHierarchy {
    /// Checks the tree, `I_T` being the tree's leaves and a subset of the
    /// graph's tasks, worker coverage through graph edges, disjoint worker
    /// ids and connectivity. With `k`, also the tree's branching bound.
    pub fn validate(&self, k: Option<usize>) -> Result<()> {
        if let Some(k) = k {
            self.tree.validate(k)?;
        }
        let mut leaves = self.tree.leaf_tasks();
        leaves.sort_unstable();
        if leaves != self.tree_tasks {
            return Err(bad("tree_tasks differ from the tree's leaves"));
        }
        for t in &self.tree_tasks {
            if self.graph.tasks().binary_search(t).is_err() {
                return Err(bad(format!("tree task t{t} is not in the assignment graph")));
            }
        }
        for &u in self.graph.workers() {
            let t = self.coverage.get(&u).ok_or_else(|| Error::UncoveredWorker(format!("w{u}")))?;
            if !self.graph.has_edge(u, *t) || self.tree_tasks.binary_search(t).is_err() {
                return Err(bad(format!("w{u} is not covered by t{t} inside the tree")));
            }
        }
        if self.coverage.len() != self.graph.workers().len() {
            return Err(bad("coverage lists workers outside the graph"));
        }
        let graph_workers: BTreeSet<u32> = self.graph.workers().iter().copied().collect();
        if let Some(w) = self.tree.workers().find_map(|w| w.worker_id().filter(|id| graph_workers.contains(id))) {
            return Err(bad(format!("w{w} is both a tree worker and a graph worker")));
        }
        if !self.is_connected() {
            return Err(bad("hierarchy is not connected"));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        // tree nodes and graph nodes share only task vertices
        let mut adj: BTreeMap<(u8, Node), Vec<(u8, Node)>> = BTreeMap::new();
        let mut link = |a: (u8, Node), b: (u8, Node)| {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        };
        let key = |side: u8, n: Node| if n.is_task() { (0, n) } else { (side, n) };
        for &(p, c) in self.tree.edges() {
            link(key(1, p), key(1, c));
        }
        for (w, t) in self.graph.edges() {
            link(key(2, Node::Worker(w)), key(2, Node::Task(t)));
        }
        let mut all: BTreeSet<(u8, Node)> = adj.keys().copied().collect();
        all.extend(self.graph.tasks().iter().map(|&t| (0, Node::Task(t))));
        all.extend(self.graph.workers().iter().map(|&w| (2, Node::Worker(w))));
        let start = (1, Node::Supervisor);
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &m in adj.get(&n).into_iter().flatten() {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen.len() == all.len()
    }

    pub fn graph(&self) -> &AssignmentGraph {
        &self.graph
    }

    pub fn tree(&self) -> &SupervisionTree {
        &self.tree
    }

    pub fn tree_tasks(&self) -> &[u32] {
        &self.tree_tasks
    }

    pub fn coverage(&self) -> &BTreeMap<u32, u32> {
        &self.coverage
    }

    /// Worker levels: the tree's plus one for the graph workers.
    pub fn worker_depth(&self) -> usize {
        self.tree.worker_depth() + 1
    }

    /// The tree worker performing the graph worker's covering task.
    pub fn superior_of(&self, graph_worker: u32) -> Option<Node> {
        let t = self.coverage.get(&graph_worker)?;
        self.tree.parent(Node::Task(*t))
    }

    pub fn worker_views(&self) -> Vec<WorkerView> {
        let graph_level = self.tree.depth() - 1;
        let mut views = self.tree.worker_views();
        views.extend(self.graph.workers().iter().map(|&u| WorkerView {
            worker: Node::Worker(u),
            level: graph_level,
            tasks: self.graph.tasks_of(u).iter().map(|&t| Node::Task(t)).collect(),
        }));
        views
    }
}

/// Picks `I_T` with the allocation solvers and builds a tree of branching at
/// most `k` over it.
pub fn build_supervision_hierarchy(
    graph: AssignmentGraph,
    k: usize,
    seed: u64,
    mode: CoverMode,
) -> Result<SupervisionHierarchy> {
    let idle: Vec<u32> = graph.tasks().iter().copied().filter(|&t| graph.workers_of(t).is_empty()).collect();
    let graph = if idle.is_empty() {
        graph
    } else {
        // a task nobody performs would leave the hierarchy disconnected
        log::warn!("dropping {} unassigned tasks from the hierarchy", idle.len());
        let used = graph.tasks().iter().copied().filter(|t| !idle.contains(t)).collect();
        AssignmentGraph::new(graph.workers().to_vec(), used, graph.edges().collect())?
    };
    let inst = SAInstance::new(graph)?;
    let cover = match mode {
        CoverMode::Greedy => sa_greedy(&inst, seed),
        CoverMode::Exact => sa_exact(&inst)?,
    };
    let graph = inst.graph().clone();
    let first_worker = graph.workers().last().map_or(0, |w| w + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let tree = build_over_tasks(&cover.tasks, k, first_worker, &mut rng)?;
    let h = SupervisionHierarchy { graph, tree, tree_tasks: cover.tasks, coverage: cover.cover_witness };
    h.validate(Some(k))?;
    Ok(h)
}

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::node::Node;
use crate::error::{invalid, Error, Result};

/// Layered supervision tree: the supervisor at level 0, workers in the
/// middle levels and tasks as leaves at level `L - 1`.
///
/// Workers on level `L - 2` perform their leaf tasks. Every node above that
/// performs exactly one task in common with each of its children, picked
/// from the child's own tasks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeWire", into = "TreeWire")]
pub struct SupervisionTree {
    levels: Vec<Vec<Node>>,
    edges: Vec<(Node, Node)>,
    shared: Vec<(Node, Node, u32)>,
    level_of: BTreeMap<Node, usize>,
    parent: BTreeMap<Node, Node>,
    children: BTreeMap<Node, Vec<Node>>,
    performs: BTreeMap<Node, Vec<u32>>,
    shared_task: BTreeMap<Node, u32>,
}

#[derive(Serialize, Deserialize)]
struct TreeWire {
    levels: Vec<Vec<Node>>,
    edges: Vec<(Node, Node)>,
    shared: Vec<(Node, Node, Node)>,
}

impl TryFrom<TreeWire> for SupervisionTree {
    type Error = Error;

    fn try_from(w: TreeWire) -> Result<Self> {
        let shared = w
            .shared
            .into_iter()
            .map(|(p, c, t)| {
                t.task_id()
                    .map(|t| (p, c, t))
                    .ok_or_else(|| invalid(format!("shared entry [{p}, {c}, {t}] does not name a task")))
            })
            .collect::<Result<Vec<_>>>()?;
        SupervisionTree::from_parts(w.levels, w.edges, shared)
    }
}

impl From<SupervisionTree> for TreeWire {
    fn from(t: SupervisionTree) -> Self {
        TreeWire {
            levels: t.levels,
            edges: t.edges,
            shared: t.shared.into_iter().map(|(p, c, s)| (p, c, Node::Task(s))).collect(),
        }
    }
}

/// What a worker is told about the hierarchy: its level and its tasks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerView {
    pub worker: Node,
    pub level: usize,
    pub tasks: Vec<Node>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidStructure(msg.into())
}

impl SupervisionTree {
    /// Assembles a tree from its serialized parts and checks every structural
    /// invariant except the branching bound (see [`SupervisionTree::validate`]).
    pub fn from_parts(
        levels: Vec<Vec<Node>>,
        edges: Vec<(Node, Node)>,
        shared: Vec<(Node, Node, u32)>,
    ) -> Result<Self> {
        let depth = levels.len();
        if depth < 3 {
            return Err(bad(format!("a supervision tree has at least 3 levels, got {depth}")));
        }
        if levels[0] != [Node::Supervisor] {
            return Err(bad("level 0 must hold exactly the supervisor"));
        }
        let mut level_of = BTreeMap::new();
        for (l, nodes) in levels.iter().enumerate() {
            if nodes.is_empty() {
                return Err(bad(format!("level {l} is empty")));
            }
            for &n in nodes {
                let ok = match n {
                    Node::Supervisor => l == 0,
                    Node::Worker(_) => l > 0 && l < depth - 1,
                    Node::Task(_) => l == depth - 1,
                };
                if !ok {
                    return Err(bad(format!("{n} cannot sit on level {l} of a depth-{depth} tree")));
                }
                if level_of.insert(n, l).is_some() {
                    return Err(bad(format!("{n} appears more than once")));
                }
            }
        }

        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
        for &(p, c) in &edges {
            let (lp, lc) = match (level_of.get(&p), level_of.get(&c)) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Err(bad(format!("edge [{p}, {c}] references an unknown node"))),
            };
            if lc != lp + 1 {
                return Err(bad(format!("edge [{p}, {c}] skips levels")));
            }
            if parent.insert(c, p).is_some() {
                return Err(bad(format!("{c} has more than one parent")));
            }
            children.entry(p).or_default().push(c);
        }
        for (&n, &l) in &level_of {
            if l > 0 && !parent.contains_key(&n) {
                return Err(bad(format!("{n} has no parent")));
            }
            if l < depth - 1 && !children.contains_key(&n) {
                return Err(bad(format!("{n} has no children")));
            }
        }

        let mut shared_task = BTreeMap::new();
        for &(p, c, t) in &shared {
            if parent.get(&c) != Some(&p) {
                return Err(bad(format!("shared entry [{p}, {c}] is not a tree edge")));
            }
            if c.is_task() {
                return Err(bad(format!("shared entry [{p}, {c}] points at a leaf")));
            }
            if shared_task.insert(c, t).is_some() {
                return Err(bad(format!("{c} shares more than one task with its parent")));
            }
        }

        // tasks performed, bottom-up
        let mut performs: BTreeMap<Node, Vec<u32>> = BTreeMap::new();
        for l in (0..depth - 1).rev() {
            for &n in &levels[l] {
                let kids = &children[&n];
                let tasks: Vec<u32> = if l == depth - 2 {
                    kids.iter().filter_map(Node::task_id).collect()
                } else {
                    let mut ts = Vec::with_capacity(kids.len());
                    for c in kids {
                        let t = *shared_task
                            .get(c)
                            .ok_or_else(|| bad(format!("{n} shares no task with its child {c}")))?;
                        if !performs[c].contains(&t) {
                            return Err(bad(format!("{c} does not perform t{t}, shared with {n}")));
                        }
                        ts.push(t);
                    }
                    ts
                };
                performs.insert(n, tasks);
            }
        }
        for level in levels.iter().take(depth.saturating_sub(2)) {
            for &n in level {
                let mine: BTreeSet<u32> = performs[&n].iter().copied().collect();
                for c in &children[&n] {
                    let common = performs[c].iter().filter(|t| mine.contains(t)).count();
                    if common != 1 {
                        return Err(bad(format!("{n} and its child {c} have {common} tasks in common")));
                    }
                }
            }
        }

        Ok(SupervisionTree { levels, edges, shared, level_of, parent, children, performs, shared_task })
    }

    /// Structural invariants plus `branching <= k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        let b = self.max_branching();
        if b > k {
            return Err(bad(format!("branching factor {b} exceeds k = {k}")));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Number of worker levels, `L - 2`.
    pub fn worker_depth(&self) -> usize {
        self.levels.len() - 2
    }

    pub fn levels(&self) -> &[Vec<Node>] {
        &self.levels
    }

    pub fn edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    pub fn shared(&self) -> &[(Node, Node, u32)] {
        &self.shared
    }

    pub fn max_branching(&self) -> usize {
        self.children.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn level_of(&self, n: Node) -> Option<usize> {
        self.level_of.get(&n).copied()
    }

    pub fn parent(&self, n: Node) -> Option<Node> {
        self.parent.get(&n).copied()
    }

    pub fn children(&self, n: Node) -> &[Node] {
        self.children.get(&n).map_or(&[], Vec::as_slice)
    }

    /// Tasks performed by a worker or the supervisor.
    pub fn tasks_of(&self, n: Node) -> &[u32] {
        self.performs.get(&n).map_or(&[], Vec::as_slice)
    }

    /// The task `n` shares with its parent.
    pub fn shared_with_parent(&self, n: Node) -> Option<u32> {
        self.shared_task.get(&n).copied()
    }

    pub fn leaf_tasks(&self) -> Vec<u32> {
        self.levels[self.levels.len() - 1].iter().filter_map(Node::task_id).collect()
    }

    pub fn workers(&self) -> impl Iterator<Item = Node> + '_ {
        self.levels[1..self.levels.len() - 1].iter().flatten().copied()
    }

    /// Maps each leaf task to the bottom-level worker performing it.
    pub fn performer_of_leaf(&self) -> BTreeMap<u32, Node> {
        self.levels[self.levels.len() - 1]
            .iter()
            .filter_map(|n| Some((n.task_id()?, self.parent[n])))
            .collect()
    }

    pub fn worker_views(&self) -> Vec<WorkerView> {
        self.workers()
            .map(|w| WorkerView {
                worker: w,
                level: self.level_of[&w],
                tasks: self.performs[&w].iter().map(|&t| Node::Task(t)).collect(),
            })
            .collect()
    }
}

/// Builds a supervision tree over tasks `t0..t{n_tasks-1}` with branching at most `k`.
pub fn build_supervision_tree(n_tasks: usize, k: usize, seed: u64) -> Result<SupervisionTree> {
    if n_tasks < 1 {
        return Err(invalid("a supervision tree needs at least one task"));
    }
    let tasks: Vec<u32> = (0..n_tasks as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_over_tasks(&tasks, k, 0, &mut rng)
}

/// Bottom-up construction: leaf workers take up to `k` tasks each; every
/// higher level groups up to `k` nodes under a new parent, which performs one
/// uniformly chosen task of each child. The supervisor tops the first level
/// with at most `k` nodes. The last group of a level takes the remainder.
pub fn build_over_tasks<R: Rng>(
    tasks: &[u32],
    k: usize,
    first_worker: u32,
    rng: &mut R,
) -> Result<SupervisionTree> {
    if k < 2 {
        return Err(invalid("branching factor k must be at least 2"));
    }
    if tasks.is_empty() {
        return Err(invalid("a supervision tree needs at least one task"));
    }
    let mut next = first_worker;
    let mut fresh = || {
        let w = Node::Worker(next);
        next += 1;
        w
    };

    let mut levels_up: Vec<Vec<Node>> = vec![tasks.iter().map(|&t| Node::Task(t)).collect()];
    let mut edges_up: Vec<Vec<(Node, Node)>> = Vec::new();
    let mut shared = Vec::new();
    let mut performs: BTreeMap<Node, Vec<u32>> = BTreeMap::new();

    let mut current = Vec::with_capacity(tasks.len().div_ceil(k));
    let mut edges = Vec::with_capacity(tasks.len());
    for chunk in tasks.chunks(k) {
        let w = fresh();
        edges.extend(chunk.iter().map(|&t| (w, Node::Task(t))));
        performs.insert(w, chunk.to_vec());
        current.push(w);
    }
    levels_up.push(current.clone());
    edges_up.push(edges);

    loop {
        let top = current.len() <= k;
        let group_size = if top { current.len() } else { k };
        let mut parents = Vec::with_capacity(current.len().div_ceil(group_size));
        let mut edges = Vec::with_capacity(current.len());
        for group in current.chunks(group_size) {
            let p = if top { Node::Supervisor } else { fresh() };
            let mut picked = Vec::with_capacity(group.len());
            for &c in group {
                let theirs = &performs[&c];
                let t = theirs[rng.random_range(0..theirs.len())];
                edges.push((p, c));
                shared.push((p, c, t));
                picked.push(t);
            }
            performs.insert(p, picked);
            parents.push(p);
        }
        levels_up.push(parents.clone());
        edges_up.push(edges);
        if top {
            break;
        }
        current = parents;
    }

    levels_up.reverse();
    let edges: Vec<(Node, Node)> = edges_up.into_iter().rev().flatten().collect();
    // shared entries were produced bottom-up; list them top-down like the edges
    let order: BTreeMap<Node, usize> = edges.iter().enumerate().map(|(i, &(_, c))| (c, i)).collect();
    shared.sort_by_key(|(_, c, _)| order[c]);
    let tree = SupervisionTree::from_parts(levels_up, edges, shared)?;
    tree.validate(k)?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_tasks_branching_two() {
        let t = build_supervision_tree(4, 2, 0).unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.levels()[1].len(), 2);
        assert_eq!(t.children(Node::Supervisor).len(), 2);
        assert_eq!(t.tasks_of(Node::Supervisor).len(), 2);
        for w in t.workers() {
            assert_eq!(t.tasks_of(w).len(), 2);
        }
    }

    #[test]
    fn single_task() {
        let t = build_supervision_tree(1, 2, 0).unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.levels()[1], vec![Node::Worker(0)]);
        assert_eq!(t.tasks_of(Node::Supervisor), &[0]);
    }

    #[test]
    fn nine_tasks_branching_three() {
        let t = build_supervision_tree(9, 3, 5).unwrap();
        let sizes: Vec<usize> = t.levels().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 3, 9]);
    }

    #[test]
    fn deeper_tree_with_remainder() {
        let t = build_supervision_tree(11, 2, 3).unwrap();
        let sizes: Vec<usize> = t.levels().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 2, 3, 6, 11]);
        t.validate(2).unwrap();
        assert!(t.validate(1).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_supervision_tree(0, 2, 0).is_err());
        assert!(build_supervision_tree(5, 1, 0).is_err());
    }

    #[test]
    fn json_roundtrip_and_schema() {
        let t = build_supervision_tree(4, 2, 11).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.starts_with(r#"{"levels":[["supervisor"],["w0","w1"],["t0","t1","t2","t3"]],"edges":[["supervisor","w0"]"#));
        let back: SupervisionTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn tampered_json_fails_validation() {
        let t = build_supervision_tree(4, 2, 11).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();

        let mut wrong_task = v.clone();
        // point the supervisor's first shared task at a task the child does not do
        let child = wrong_task["shared"][0][1].as_str().unwrap().to_string();
        let foreign = if child == "w0" { "t3" } else { "t0" };
        wrong_task["shared"][0][2] = serde_json::json!(foreign);
        assert!(serde_json::from_value::<SupervisionTree>(wrong_task).is_err());

        let mut dup = v.clone();
        dup["levels"][2].as_array_mut().unwrap().push(serde_json::json!("t0"));
        assert!(serde_json::from_value::<SupervisionTree>(dup).is_err());

        let mut orphan = v;
        orphan["edges"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<SupervisionTree>(orphan).is_err());
    }

    #[test]
    fn worker_views_hide_parents() {
        let t = build_supervision_tree(8, 2, 2).unwrap();
        let views = t.worker_views();
        assert_eq!(views.len(), 4 + 2);
        let json = serde_json::to_value(&views[0]).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["level", "tasks", "worker"]);
    }
}

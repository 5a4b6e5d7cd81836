pub mod graph;
pub mod hierarchy;
pub mod node;
pub mod tree;

pub use graph::{build_peg_assignment, AssignmentGraph, PegAssignment};
pub use hierarchy::{build_supervision_hierarchy, CoverMode, SupervisionHierarchy};
pub use node::Node;
pub use tree::{build_over_tasks, build_supervision_tree, SupervisionTree, WorkerView};

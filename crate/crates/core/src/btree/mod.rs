//! Behavior-tree runtime with a learned Q-value node.

mod context;
mod loader;
mod runner;
mod tree;

pub use context::{encode_context, BTContext, Blackboard, TaskStage, Window};
pub use loader::parse_tree;
pub use runner::{run_phase, run_session, PhaseRun};
pub use tree::{
    argmax_wait_ties, build_packaging_tree, reactive_plan, BehaviorTree, Node, NodeId, NodeKind, NodeStatus, QPolicy,
    Registry,
};

#[cfg(test)]
mod tests;

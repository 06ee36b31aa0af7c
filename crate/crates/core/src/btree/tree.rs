use std::collections::HashMap;

use super::context::{encode_context, BTContext, Blackboard, Window};
use crate::error::{Error, Result};
use crate::simulator::RobotAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    Running,
    Success,
    Failure,
}

/// Declarative tree description. Leaves name a handle resolved in a
/// [`Registry`] at tick time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Sequence(Vec<Node>),
    Fallback(Vec<Node>),
    Condition(String),
    Action(String),
    QValue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Condition,
    Action,
    QValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
struct NodeData {
    kind: NodeKind,
    handle: String,
    children: Vec<NodeId>,
    ticks: u64,
    last: Option<NodeStatus>,
    executing: Option<RobotAction>,
}

/// Source of action values for a Q-node. Implementations hold their own
/// recurrent state, reset at each phase start.
pub trait QPolicy {
    fn reset(&mut self);
    fn q_values(&mut self, window: &Window, context: &BTContext) -> Result<[f64; RobotAction::COUNT]>;
}

type ConditionFn = Box<dyn Fn(&Blackboard) -> bool>;
type ActionFn = Box<dyn Fn(&Blackboard) -> Option<RobotAction>>;

/// Handle table for conditions, actions and policies.
pub struct Registry {
    conditions: HashMap<String, ConditionFn>,
    actions: HashMap<String, ActionFn>,
    policies: HashMap<String, Box<dyn QPolicy>>,
    /// Q-node activation threshold.
    pub v_min: f64,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    /// Registry with the built-in handles `always`, `never`,
    /// `trigger_arrived`, `box_type_known` (conditions) and `reactive`
    /// (action: the trigger-revealed correct action).
    pub fn new() -> Self {
        let mut r = Self {
            conditions: HashMap::new(),
            actions: HashMap::new(),
            policies: HashMap::new(),
            v_min: 0.0,
        };
        r.add_condition("always", |_| true);
        r.add_condition("never", |_| false);
        r.add_condition("trigger_arrived", Blackboard::trigger_arrived);
        r.add_condition("box_type_known", |bb| bb.box_type.is_some());
        r.add_action("reactive", |bb| bb.trigger_info.map(|k| k.correct_action()));
        r
    }

    pub fn add_condition(&mut self, name: &str, f: impl Fn(&Blackboard) -> bool + 'static) {
        self.conditions.insert(name.to_string(), Box::new(f));
    }

    pub fn add_action(&mut self, name: &str, f: impl Fn(&Blackboard) -> Option<RobotAction> + 'static) {
        self.actions.insert(name.to_string(), Box::new(f));
    }

    pub fn add_policy(&mut self, name: &str, p: Box<dyn QPolicy>) {
        self.policies.insert(name.to_string(), p);
    }

    pub fn remove_policy(&mut self, name: &str) -> Option<Box<dyn QPolicy>> {
        self.policies.remove(name)
    }

    pub fn reset_policies(&mut self) {
        for p in self.policies.values_mut() {
            p.reset();
        }
    }
}

/// Index of the largest value; ties go to the lowest index, so Wait wins.
pub fn argmax_wait_ties(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Arena-allocated tree with per-node tick counters.
#[derive(Debug, Clone)]
pub struct BehaviorTree {
    nodes: Vec<NodeData>,
    root: NodeId,
}

impl BehaviorTree {
    pub fn new(root: &Node) -> Result<Self> {
        let mut t = Self { nodes: Vec::new(), root: NodeId(0) };
        t.root = t.insert(root)?;
        Ok(t)
    }

    fn insert(&mut self, node: &Node) -> Result<NodeId> {
        let (kind, handle, children) = match node {
            Node::Sequence(c) => (NodeKind::Sequence, "sequence", Some(c)),
            Node::Fallback(c) => (NodeKind::Fallback, "fallback", Some(c)),
            Node::Condition(h) => (NodeKind::Condition, h.as_str(), None),
            Node::Action(h) => (NodeKind::Action, h.as_str(), None),
            Node::QValue(h) => (NodeKind::QValue, h.as_str(), None),
        };
        let id = NodeId(self.nodes.len());
        self.nodes.push(NodeData {
            kind,
            handle: handle.to_string(),
            children: Vec::new(),
            ticks: 0,
            last: None,
            executing: None,
        });
        if let Some(children) = children {
            if children.is_empty() {
                return Err(Error::InvalidArgument(format!("{kind:?} node needs at least one child")));
            }
            let ids = children.iter().map(|c| self.insert(c)).collect::<Result<Vec<_>>>()?;
            self.nodes[id.0].children = ids;
        }
        Ok(id)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn tick_count(&self, id: NodeId) -> u64 {
        self.nodes[id.0].ticks
    }

    /// Status returned by the node's most recent tick.
    pub fn last_status(&self, id: NodeId) -> Option<NodeStatus> {
        self.nodes[id.0].last
    }

    /// First node (pre-order) with the given kind and handle.
    pub fn find(&self, kind: NodeKind, handle: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.kind == kind && n.handle == handle)
            .map(NodeId)
    }

    /// Clears in-flight actions and last statuses; tick counts are kept.
    pub fn halt(&mut self) {
        for n in &mut self.nodes {
            n.executing = None;
            n.last = None;
        }
    }

    pub fn tick(&mut self, bb: &mut Blackboard, reg: &mut Registry) -> NodeStatus {
        self.tick_node(self.root, bb, reg)
    }

    fn tick_node(&mut self, id: NodeId, bb: &mut Blackboard, reg: &mut Registry) -> NodeStatus {
        self.nodes[id.0].ticks += 1;
        let status = match self.nodes[id.0].kind {
            NodeKind::Sequence => self.tick_composite(id, bb, reg, NodeStatus::Success),
            NodeKind::Fallback => self.tick_composite(id, bb, reg, NodeStatus::Failure),
            NodeKind::Condition => {
                let h = &self.nodes[id.0].handle;
                match reg.conditions.get(h) {
                    Some(f) if f(bb) => NodeStatus::Success,
                    Some(_) => NodeStatus::Failure,
                    None => {
                        log::warn!("unknown condition handle `{h}`");
                        NodeStatus::Failure
                    }
                }
            }
            NodeKind::Action => self.tick_action(id, bb, reg),
            NodeKind::QValue => self.tick_qvalue(id, bb, reg),
        };
        self.nodes[id.0].last = Some(status);
        status
    }

    /// Memory-less composite: re-ticks from the first child and returns the
    /// first child status different from `pass`.
    fn tick_composite(&mut self, id: NodeId, bb: &mut Blackboard, reg: &mut Registry, pass: NodeStatus) -> NodeStatus {
        for i in 0..self.nodes[id.0].children.len() {
            let child = self.nodes[id.0].children[i];
            let s = self.tick_node(child, bb, reg);
            if s != pass {
                return s;
            }
        }
        pass
    }

    fn finish_execution(&mut self, id: NodeId, bb: &mut Blackboard) -> Option<NodeStatus> {
        let a = self.nodes[id.0].executing.take()?;
        bb.completed = Some(a);
        Some(NodeStatus::Success)
    }

    fn tick_action(&mut self, id: NodeId, bb: &mut Blackboard, reg: &mut Registry) -> NodeStatus {
        if let Some(s) = self.finish_execution(id, bb) {
            return s;
        }
        let h = &self.nodes[id.0].handle;
        let Some(f) = reg.actions.get(h) else {
            log::warn!("unknown action handle `{h}`");
            return NodeStatus::Failure;
        };
        match f(bb) {
            Some(a) if bb.dispatch(a) => {
                self.nodes[id.0].executing = Some(a);
                NodeStatus::Running
            }
            _ => NodeStatus::Failure,
        }
    }

    fn tick_qvalue(&mut self, id: NodeId, bb: &mut Blackboard, reg: &mut Registry) -> NodeStatus {
        if let Some(s) = self.finish_execution(id, bb) {
            return s;
        }
        let h = &self.nodes[id.0].handle;
        let Some(policy) = reg.policies.get_mut(h) else {
            log::warn!("no policy loaded for Q-node `{h}`");
            return NodeStatus::Failure;
        };
        let Some(window) = bb.window.take() else {
            return NodeStatus::Failure;
        };
        let values = match policy.q_values(&window, &encode_context(bb)) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("Q-node `{h}` failed: {e}");
                return NodeStatus::Failure;
            }
        };
        let best = argmax_wait_ties(&values);
        let action = RobotAction::from_index(best).expect("six action values");
        if action.is_wait() || values[best] <= reg.v_min || !bb.dispatch(action) {
            return NodeStatus::Failure;
        }
        self.nodes[id.0].executing = Some(action);
        NodeStatus::Running
    }
}

/// `Fallback(QValue(policy), Sequence(Condition(trigger_arrived), Action(reactive)))`.
pub fn build_packaging_tree(policy: &str) -> Node {
    Node::Fallback(vec![Node::QValue(policy.to_string()), reactive_plan()])
}

/// The minimal plan: wait for the trigger, then do what it asks.
pub fn reactive_plan() -> Node {
    Node::Sequence(vec![
        Node::Condition("trigger_arrived".to_string()),
        Node::Action("reactive".to_string()),
    ])
}

use std::cell::RefCell;
use std::collections::VecDeque;
use std::rc::Rc;

use super::*;
use crate::error::Result;
use crate::simulator::{generate_session, RobotAction, SimConfig};

fn leaf_cond(h: &str) -> Node {
    Node::Condition(h.to_string())
}

#[derive(Default)]
struct Log {
    calls: usize,
    resets: usize,
}

/// Replays fixed action values, one vector per call.
struct Scripted {
    values: VecDeque<[f64; 6]>,
    log: Rc<RefCell<Log>>,
}

impl QPolicy for Scripted {
    fn reset(&mut self) {
        self.log.borrow_mut().resets += 1;
    }

    fn q_values(&mut self, _w: &Window, _c: &BTContext) -> Result<[f64; 6]> {
        self.log.borrow_mut().calls += 1;
        Ok(self.values.pop_front().unwrap_or([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
    }
}

fn scripted(values: Vec<[f64; 6]>) -> (Box<dyn QPolicy>, Rc<RefCell<Log>>) {
    let log = Rc::new(RefCell::new(Log::default()));
    (Box::new(Scripted { values: values.into(), log: log.clone() }), log)
}

fn window() -> Option<Window> {
    Some(Window { index: 1, frames: Vec::new() })
}

#[test]
fn sequence_of_successes_succeeds() {
    let mut t = BehaviorTree::new(&Node::Sequence(vec![leaf_cond("always"), leaf_cond("always")])).unwrap();
    assert_eq!(t.tick(&mut Blackboard::default(), &mut Registry::new()), NodeStatus::Success);
}

#[test]
fn fallback_failure_then_running_is_running() {
    let mut reg = Registry::new();
    reg.add_action("move", |_| Some(RobotAction::LiftBox));
    let mut t = BehaviorTree::new(&Node::Fallback(vec![leaf_cond("never"), Node::Action("move".into())])).unwrap();
    assert_eq!(t.tick(&mut Blackboard::default(), &mut reg), NodeStatus::Running);
}

#[test]
fn sequence_short_circuits_on_failure() {
    let mut t = BehaviorTree::new(&Node::Sequence(vec![leaf_cond("never"), leaf_cond("always")])).unwrap();
    assert_eq!(t.tick(&mut Blackboard::default(), &mut Registry::new()), NodeStatus::Failure);
    let second = t.children(t.root())[1];
    assert_eq!(t.tick_count(second), 0);
}

#[test]
fn fallback_short_circuits_on_success() {
    let mut t = BehaviorTree::new(&Node::Fallback(vec![leaf_cond("always"), leaf_cond("never")])).unwrap();
    assert_eq!(t.tick(&mut Blackboard::default(), &mut Registry::new()), NodeStatus::Success);
    assert_eq!(t.tick_count(t.children(t.root())[1]), 0);
}

#[test]
fn unknown_handles_fail() {
    let mut reg = Registry::new();
    for n in [leaf_cond("nope"), Node::Action("nope".into()), Node::QValue("nope".into())] {
        let mut t = BehaviorTree::new(&n).unwrap();
        let mut bb = Blackboard { window: window(), ..Blackboard::default() };
        assert_eq!(t.tick(&mut bb, &mut reg), NodeStatus::Failure);
        assert_eq!(bb.dispatched, None);
    }
}

#[test]
fn empty_composite_rejected() {
    assert!(BehaviorTree::new(&Node::Sequence(vec![])).is_err());
}

#[test]
fn qnode_fails_when_wait_is_best() {
    let mut reg = Registry::new();
    let (p, _) = scripted(vec![[0.5, 0.1, 0.0, 0.0, 0.0, 0.0]]);
    reg.add_policy("q", p);
    let mut t = BehaviorTree::new(&Node::QValue("q".into())).unwrap();
    let mut bb = Blackboard { window: window(), ..Blackboard::default() };
    assert_eq!(t.tick(&mut bb, &mut reg), NodeStatus::Failure);
    assert_eq!(bb.dispatched, None);
}

#[test]
fn qnode_dispatches_then_succeeds() {
    let mut reg = Registry::new();
    let (p, _) = scripted(vec![[0.0, 3.0, 0.0, 0.0, 0.0, 0.0]]);
    reg.add_policy("q", p);
    let mut t = BehaviorTree::new(&Node::QValue("q".into())).unwrap();
    let mut bb = Blackboard { window: window(), ..Blackboard::default() };
    assert_eq!(t.tick(&mut bb, &mut reg), NodeStatus::Running);
    assert_eq!(bb.dispatched, Some(RobotAction::Pick { item: 1, position: 1 }));
    assert_eq!(t.tick(&mut bb, &mut reg), NodeStatus::Success);
    assert_eq!(bb.completed, Some(RobotAction::Pick { item: 1, position: 1 }));
}

#[test]
fn qnode_respects_activation_threshold() {
    let mut reg = Registry::new();
    let (p, _) = scripted(vec![[-1.0, -0.5, -2.0, -2.0, -2.0, -2.0], [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
    reg.add_policy("q", p);
    let mut t = BehaviorTree::new(&Node::QValue("q".into())).unwrap();
    for _ in 0..2 {
        let mut bb = Blackboard { window: window(), ..Blackboard::default() };
        assert_eq!(t.tick(&mut bb, &mut reg), NodeStatus::Failure);
        assert_eq!(bb.dispatched, None);
    }
}

#[test]
fn qnode_without_window_fails_and_keeps_state() {
    let mut reg = Registry::new();
    let (p, log) = scripted(vec![]);
    reg.add_policy("q", p);
    let mut t = BehaviorTree::new(&Node::QValue("q".into())).unwrap();
    let mut bb = Blackboard::default();
    assert_eq!(t.tick(&mut bb, &mut reg), NodeStatus::Failure);
    assert_eq!(log.borrow().calls, 0);
}

#[test]
fn hand_simulated_four_tick_trace() {
    let session = generate_session(&SimConfig::default(), 17).unwrap();
    let kind = session.script.phases[0].kind;
    let correct = kind.correct_action();
    let mut act = [0.0; 6];
    act[correct.index()] = 3.0;
    let mut reg = Registry::new();
    let (p, log) = scripted(vec![[0.5, 0.1, 0.1, 0.1, 0.1, 0.1], [0.0, -0.5, -0.5, -0.5, -0.5, -0.5], act]);
    reg.add_policy("drqn", p);
    let mut tree = BehaviorTree::new(&build_packaging_tree("drqn")).unwrap();
    let run = run_phase(&mut tree, &mut reg, &session, 0).unwrap();

    // t=1: Wait best -> Q fails, trigger absent -> root fails, robot waits.
    // t=2: Wait ties at 0 -> same.
    // t=3: correct pick valued 3.0 -> dispatched, root running.
    // then: pick completes -> Q-node and root succeed.
    assert_eq!(run.statuses, [NodeStatus::Failure, NodeStatus::Failure, NodeStatus::Running, NodeStatus::Success]);
    assert_eq!(run.outcome.action, correct);
    assert_eq!(run.outcome.action_time, 3.0);
    assert_eq!(run.outcome.t_b, 5.0);
    assert_eq!(run.outcome.reward, 4.0);
    assert_eq!(run.reactive, None);
    assert_eq!(log.borrow().calls, 3);
    assert_eq!(log.borrow().resets, 1);

    let q = tree.find(NodeKind::QValue, "drqn").unwrap();
    let cond = tree.find(NodeKind::Condition, "trigger_arrived").unwrap();
    let reactive = tree.find(NodeKind::Action, "reactive").unwrap();
    assert_eq!(tree.tick_count(q), 4);
    assert_eq!(tree.tick_count(cond), 2);
    assert_eq!(tree.tick_count(reactive), 0);
}

#[test]
fn silent_qnode_reduces_to_reactive_plan() {
    let session = generate_session(&SimConfig::default(), 5).unwrap();
    let mut reg = Registry::new();
    let (p, _) = scripted(vec![]);
    reg.add_policy("drqn", p);
    let mut tree = BehaviorTree::new(&build_packaging_tree("drqn")).unwrap();
    let runs = run_session(&mut tree, &mut reg, &session).unwrap();
    for (run, phase) in runs.iter().zip(&session.script.phases) {
        assert_eq!(run.outcome.reward, 0.0);
        assert_eq!(run.reactive, Some(phase.kind.correct_action()));
        assert_eq!(run.statuses.last(), Some(&NodeStatus::Success));
    }
}

#[test]
fn without_qnode_session_return_is_zero() {
    let session = generate_session(&SimConfig::default(), 8).unwrap();
    let mut reg = Registry::new();
    for node in [reactive_plan(), build_packaging_tree("unloaded")] {
        let mut tree = BehaviorTree::new(&node).unwrap();
        let total: f64 = run_session(&mut tree, &mut reg, &session).unwrap().iter().map(|r| r.outcome.reward).sum();
        assert_eq!(total, 0.0);
    }
}

#[test]
fn eager_policy_dispatches_once_per_phase() {
    struct Eager;
    impl QPolicy for Eager {
        fn reset(&mut self) {}
        fn q_values(&mut self, _: &Window, _: &BTContext) -> Result<[f64; 6]> {
            Ok([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        }
    }
    let session = generate_session(&SimConfig::default(), 8).unwrap();
    let mut reg = Registry::new();
    reg.add_policy("q", Box::new(Eager));
    let mut tree = BehaviorTree::new(&build_packaging_tree("q")).unwrap();
    let runs = run_session(&mut tree, &mut reg, &session).unwrap();
    for r in &runs {
        assert_eq!(r.outcome.action, RobotAction::LiftBox);
        assert_eq!(r.outcome.action_time, 1.0);
        assert_eq!(r.reactive, None);
        assert_eq!(r.statuses.iter().filter(|&&s| s == NodeStatus::Running).count(), 1);
    }
    assert_eq!(runs.last().unwrap().outcome.reward, 4.5);
}

#[test]
fn argmax_ties_go_to_wait() {
    assert_eq!(argmax_wait_ties(&[0.0; 6]), 0);
    assert_eq!(argmax_wait_ties(&[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]), 1);
}

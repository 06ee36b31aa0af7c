use super::context::{Blackboard, Window};
use super::tree::{BehaviorTree, NodeStatus, Registry};
use crate::error::{Error, Result};
use crate::simulator::{EpisodeStep, EpisodeStream, PhaseOutcome, RobotAction, Session};

const MAX_TICKS: usize = 10_000;

/// One phase executed by a tree against the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRun {
    pub outcome: PhaseOutcome,
    /// Root status of every tick.
    pub statuses: Vec<NodeStatus>,
    /// Action performed once the trigger arrived, when nothing was done
    /// proactively.
    pub reactive: Option<RobotAction>,
}

/// Ticks `tree` once per window until the phase ends and the dispatched
/// action completes. Policies are reset at the start.
pub fn run_phase(tree: &mut BehaviorTree, reg: &mut Registry, session: &Session, phase: usize) -> Result<PhaseRun> {
    tree.halt();
    reg.reset_policies();
    let script = &session.script.phases[phase];
    let mut bb = Blackboard::for_phase(script);
    let (mut ep, first) = EpisodeStream::new(session, phase)?;
    bb.window = Some(Window { index: 1, frames: first });
    let mut statuses = Vec::new();
    let mut reactive = None;
    for _ in 0..MAX_TICKS {
        let status = tree.tick(&mut bb, reg);
        statuses.push(status);
        if let Some(a) = bb.dispatched.take() {
            if ep.is_terminal() {
                reactive = Some(a);
            } else if let EpisodeStep::Window(_) = ep.step(a)? {
                unreachable!("a non-wait action always ends the episode");
            }
            continue;
        }
        if bb.completed.is_some() {
            let outcome = ep.outcome().expect("completed actions follow a terminal step");
            return Ok(PhaseRun { outcome, statuses, reactive });
        }
        if status == NodeStatus::Running {
            continue;
        }
        if ep.is_terminal() {
            let outcome = ep.outcome().expect("terminal");
            return Ok(PhaseRun { outcome, statuses, reactive });
        }
        match ep.step(RobotAction::Wait)? {
            EpisodeStep::Window(frames) => bb.window = Some(Window { index: ep.window_index(), frames }),
            EpisodeStep::Terminal(_) => {
                bb.window = None;
                bb.trigger_info = Some(script.kind);
            }
        }
    }
    Err(Error::InvalidArgument(format!("phase did not finish within {MAX_TICKS} ticks")))
}

/// Runs every phase of a session; returns per-phase outcomes.
pub fn run_session(tree: &mut BehaviorTree, reg: &mut Registry, session: &Session) -> Result<Vec<PhaseRun>> {
    (0..session.script.phases.len()).map(|p| run_phase(tree, reg, session, p)).collect()
}

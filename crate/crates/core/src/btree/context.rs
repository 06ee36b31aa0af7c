use crate::simulator::{PhaseKind, PhaseScript, RobotAction};
use crate::skeleton::MotionFrame;

/// Where the task currently stands, from the robot's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStage {
    /// No box on the table yet.
    AwaitingBox,
    /// Box delivered, first item not yet requested. Only observed between
    /// phases.
    AwaitingItem,
    /// Human either adds bubble wrap (another item) or wraps up.
    AwaitingWrapDecision,
}

/// A complete observation window handed to the Q-node.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// 1-based index within the phase; the window ends at `index` seconds.
    pub index: usize,
    pub frames: Vec<MotionFrame>,
}

/// Shared task state read and written by tree nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Blackboard {
    pub stage: TaskStage,
    /// Box type from the barcode, once read.
    pub box_type: Option<u8>,
    pub items_placed: usize,
    /// Ground truth revealed by the trigger (barcode read or explicit request).
    pub trigger_info: Option<PhaseKind>,
    /// Window available to this tick; consumed by the Q-node.
    pub window: Option<Window>,
    /// Action dispatched this tick, for the runner to execute.
    pub dispatched: Option<RobotAction>,
    /// Action whose execution finished this tick.
    pub completed: Option<RobotAction>,
    pub dispatched_this_phase: bool,
}

impl Default for Blackboard {
    fn default() -> Self {
        Self {
            stage: TaskStage::AwaitingBox,
            box_type: None,
            items_placed: 0,
            trigger_info: None,
            window: None,
            dispatched: None,
            completed: None,
            dispatched_this_phase: false,
        }
    }
}

impl Blackboard {
    /// Task state at the start of a scripted phase.
    pub fn for_phase(p: &PhaseScript) -> Self {
        let stage = match p.kind {
            PhaseKind::BoxDelivery { .. } => TaskStage::AwaitingBox,
            PhaseKind::BubbleWrap { .. } | PhaseKind::WrapUp { .. } => TaskStage::AwaitingWrapDecision,
        };
        Self {
            stage,
            box_type: p.box_type_known.then(|| p.kind.box_type()),
            items_placed: p.items_placed,
            ..Self::default()
        }
    }

    pub fn trigger_arrived(&self) -> bool {
        self.trigger_info.is_some()
    }

    /// Queues `action` unless one was already dispatched this phase.
    pub fn dispatch(&mut self, action: RobotAction) -> bool {
        if self.dispatched_this_phase || action.is_wait() {
            return false;
        }
        self.dispatched = Some(action);
        self.dispatched_this_phase = true;
        true
    }
}

/// Fixed-length encoding of the task state:
/// `[awaiting_box, awaiting_item, awaiting_wrap_decision, box_type_known,
/// type1, type2, min(items, 4) / 4]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BTContext(pub [f64; BTContext::DIM]);

impl BTContext {
    pub const DIM: usize = 7;
    /// Layout version stored in checkpoints.
    pub const LAYOUT_VERSION: u32 = 1;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn for_phase(p: &PhaseScript) -> Self {
        encode_context(&Blackboard::for_phase(p))
    }
}

pub fn encode_context(bb: &Blackboard) -> BTContext {
    let mut v = [0.0; BTContext::DIM];
    v[match bb.stage {
        TaskStage::AwaitingBox => 0,
        TaskStage::AwaitingItem => 1,
        TaskStage::AwaitingWrapDecision => 2,
    }] = 1.0;
    if let Some(t) = bb.box_type {
        v[3] = 1.0;
        v[if t == 1 { 4 } else { 5 }] = 1.0;
    }
    v[6] = bb.items_placed.min(4) as f64 / 4.0;
    BTContext(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_session() {
        assert_eq!(encode_context(&Blackboard::default()).0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn barcode_of_type_two() {
        let bb = Blackboard { box_type: Some(2), ..Blackboard::default() };
        let v = encode_context(&bb).0;
        assert_eq!(&v[3..6], &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn two_items_placed() {
        let bb = Blackboard { items_placed: 2, ..Blackboard::default() };
        assert_eq!(encode_context(&bb).0[6], 0.5);
        let bb = Blackboard { items_placed: 9, ..Blackboard::default() };
        assert_eq!(encode_context(&bb).0[6], 1.0);
    }

    #[test]
    fn one_hot_blocks_and_range() {
        for stage in [TaskStage::AwaitingBox, TaskStage::AwaitingItem, TaskStage::AwaitingWrapDecision] {
            for box_type in [None, Some(1), Some(2)] {
                let v = encode_context(&Blackboard { stage, box_type, items_placed: 3, ..Blackboard::default() }).0;
                assert_eq!(v[0] + v[1] + v[2], 1.0);
                assert!(v[4] + v[5] <= 1.0);
                assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }

    #[test]
    fn dispatch_at_most_once() {
        let mut bb = Blackboard::default();
        assert!(!bb.dispatch(RobotAction::Wait));
        assert!(bb.dispatch(RobotAction::LiftBox));
        assert!(!bb.dispatch(RobotAction::LiftBox));
    }
}

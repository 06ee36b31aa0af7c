use std::fmt;

use crate::error::{Error, Result};

/// Robot decision at one step. `Wait` is index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RobotAction {
    Wait,
    /// Item type and placement position, each in `{1, 2}`.
    Pick { item: u8, position: u8 },
    LiftBox,
}

impl RobotAction {
    pub const COUNT: usize = 6;

    pub const ALL: [RobotAction; 6] = [
        RobotAction::Wait,
        RobotAction::Pick { item: 1, position: 1 },
        RobotAction::Pick { item: 1, position: 2 },
        RobotAction::Pick { item: 2, position: 1 },
        RobotAction::Pick { item: 2, position: 2 },
        RobotAction::LiftBox,
    ];

    pub fn index(self) -> usize {
        match self {
            RobotAction::Wait => 0,
            RobotAction::Pick { item, position } => 1 + 2 * (item as usize - 1) + (position as usize - 1),
            RobotAction::LiftBox => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_wait(self) -> bool {
        self == RobotAction::Wait
    }
}

impl fmt::Display for RobotAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotAction::Wait => write!(f, "wait"),
            RobotAction::Pick { item, position } => write!(f, "pick({item},{position})"),
            RobotAction::LiftBox => write!(f, "lift_box"),
        }
    }
}

/// What the human does during one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseKind {
    BoxDelivery { box_type: u8, position: u8 },
    BubbleWrap { box_type: u8 },
    WrapUp { box_type: u8 },
}

impl PhaseKind {
    pub fn box_type(self) -> u8 {
        match self {
            PhaseKind::BoxDelivery { box_type, .. } | PhaseKind::BubbleWrap { box_type } | PhaseKind::WrapUp { box_type } => box_type,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseKind::BoxDelivery { .. } => "BoxDelivery",
            PhaseKind::BubbleWrap { .. } => "BubbleWrap",
            PhaseKind::WrapUp { .. } => "WrapUp",
        }
    }

    /// The action that earns the positive reward row.
    pub fn correct_action(self) -> RobotAction {
        match self {
            PhaseKind::BoxDelivery { box_type, position } => RobotAction::Pick { item: box_type, position },
            PhaseKind::BubbleWrap { box_type } => RobotAction::Pick { item: box_type, position: 1 },
            PhaseKind::WrapUp { .. } => RobotAction::LiftBox,
        }
    }

    /// Whether `action` earns a positive reward. During bubble wrapping only
    /// the item type matters.
    pub fn is_correct(self, action: RobotAction) -> bool {
        match (self, action) {
            (PhaseKind::BoxDelivery { box_type, .. }, RobotAction::Pick { item, .. }) => item == box_type,
            (PhaseKind::BubbleWrap { box_type }, RobotAction::Pick { item, .. }) => item == box_type,
            (PhaseKind::WrapUp { .. }, RobotAction::LiftBox) => true,
            _ => false,
        }
    }
}

/// Reward in seconds of waiting time saved (negative: delay added) for a
/// proactive action taken `t_b` seconds before the trigger.
pub fn compute_reward(phase: PhaseKind, action: RobotAction, t_b: f64) -> Result<f64> {
    if !(t_b >= 0.0 && t_b.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_b must be finite and >= 0, got {t_b}")));
    }
    let gain = |cap: f64| t_b.min(cap);
    let loss = |cap: f64| (-t_b).max(-cap);
    let r = match (phase, action) {
        (_, RobotAction::Wait) => {
            return Err(Error::InvalidArgument("compute_reward called with Wait".into()));
        }
        (PhaseKind::BoxDelivery { box_type, position }, RobotAction::Pick { item, position: p }) => {
            if item != box_type {
                loss(3.5)
            } else if p == position {
                gain(4.0)
            } else {
                gain(3.5)
            }
        }
        // Lifting an empty box is treated like fetching the wrong item.
        (PhaseKind::BoxDelivery { .. }, RobotAction::LiftBox) => loss(3.5),
        (PhaseKind::BubbleWrap { box_type }, RobotAction::Pick { item, .. }) => {
            if item == box_type {
                gain(3.5)
            } else {
                loss(3.5)
            }
        }
        (PhaseKind::BubbleWrap { .. }, RobotAction::LiftBox) => loss(4.5),
        (PhaseKind::WrapUp { .. }, RobotAction::LiftBox) => gain(4.5),
        (PhaseKind::WrapUp { .. }, RobotAction::Pick { .. }) => loss(3.5),
    };
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn action_indices_round_trip() {
        for (i, a) in RobotAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(RobotAction::from_index(i), Some(*a));
        }
        assert_eq!(RobotAction::Wait.index(), 0);
        assert_eq!(RobotAction::from_index(6), None);
    }

    #[test]
    fn wait_is_rejected() {
        assert!(compute_reward(PhaseKind::WrapUp { box_type: 1 }, RobotAction::Wait, 1.0).is_err());
        assert!(compute_reward(PhaseKind::WrapUp { box_type: 1 }, RobotAction::LiftBox, -1.0).is_err());
    }

    fn any_phase() -> impl Strategy<Value = PhaseKind> {
        prop_oneof![
            (1u8..=2, 1u8..=2).prop_map(|(box_type, position)| PhaseKind::BoxDelivery { box_type, position }),
            (1u8..=2).prop_map(|box_type| PhaseKind::BubbleWrap { box_type }),
            (1u8..=2).prop_map(|box_type| PhaseKind::WrapUp { box_type }),
        ]
    }

    proptest! {
        #[test]
        fn reward_bounded_and_signed(phase in any_phase(), a in 1usize..6, t_b in 0.0f64..50.0) {
            let action = RobotAction::from_index(a).unwrap();
            let r = compute_reward(phase, action, t_b).unwrap();
            prop_assert!((-4.5..=4.5).contains(&r));
            if t_b > 0.0 {
                prop_assert_eq!(r > 0.0, phase.is_correct(action));
            }
        }
    }
}

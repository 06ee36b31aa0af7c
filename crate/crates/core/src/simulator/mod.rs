//! Packaging-task simulator: synthetic sessions, phase episodes and the
//! time-saved reward table.

mod episode;
pub mod motion;
mod reward;
mod session;

pub use episode::{resolve_decision, EpisodeStep, EpisodeStream, PhaseOutcome};
pub use reward::{compute_reward, PhaseKind, RobotAction};
pub use session::{
    generate_session, oracle_return, read_labels, window_action_label, window_activity, write_labels, ActivityClass,
    PhaseLabel, PhaseScript, Session, SessionPlan, SessionScript, SimConfig,
};

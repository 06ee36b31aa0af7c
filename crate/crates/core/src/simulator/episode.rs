use super::reward::{compute_reward, RobotAction};
use super::session::{PhaseScript, Session};
use crate::btree::BTContext;
use crate::error::{Error, Result};
use crate::skeleton::{FrameBuffer, MotionFrame, WINDOW_FRAMES};

/// Result of a finished episode (one phase).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOutcome {
    pub action: RobotAction,
    /// Decision time in seconds from the phase start.
    pub action_time: f64,
    pub t_b: f64,
    pub reward: f64,
    pub terminal: bool,
}

/// Applies `action` at decision time `t`. Returns the outcome when the
/// episode ends: on any non-Wait action, or on Wait when the next decision
/// would fall at or after the trigger.
pub fn resolve_decision(phase: &PhaseScript, t: f64, action: RobotAction) -> Result<Option<PhaseOutcome>> {
    if action.is_wait() {
        if t + 1.0 >= phase.t_trigger {
            return Ok(Some(PhaseOutcome {
                action,
                action_time: phase.t_trigger,
                t_b: 0.0,
                reward: 0.0,
                terminal: true,
            }));
        }
        return Ok(None);
    }
    let t_b = (phase.t_trigger - t).max(0.0);
    Ok(Some(PhaseOutcome {
        action,
        action_time: t,
        t_b,
        reward: compute_reward(phase.kind, action, t_b)?,
        terminal: true,
    }))
}

/// What a step returned.
#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeStep {
    Window(Vec<MotionFrame>),
    Terminal(PhaseOutcome),
}

/// Streams one phase of a session through a [`FrameBuffer`], one window per
/// decision.
#[derive(Debug, Clone)]
pub struct EpisodeStream<'a> {
    session: &'a Session,
    phase: usize,
    buffer: FrameBuffer,
    cursor: usize,
    windows: usize,
    outcome: Option<PhaseOutcome>,
}

impl<'a> EpisodeStream<'a> {
    /// Starts phase `phase` and returns the first window.
    pub fn new(session: &'a Session, phase: usize) -> Result<(Self, Vec<MotionFrame>)> {
        if phase >= session.script.phases.len() {
            return Err(Error::InvalidArgument(format!(
                "phase {phase} out of range for a {}-phase session",
                session.script.phases.len()
            )));
        }
        let mut ep = Self {
            session,
            phase,
            buffer: FrameBuffer::new(WINDOW_FRAMES),
            cursor: 0,
            windows: 0,
            outcome: None,
        };
        let first = ep
            .next_window()?
            .ok_or_else(|| Error::InvalidArgument("phase shorter than one window".into()))?;
        Ok((ep, first))
    }

    fn next_window(&mut self) -> Result<Option<Vec<MotionFrame>>> {
        let frames = &self.session.frames[self.phase];
        while self.cursor < frames.len() {
            let f = frames[self.cursor].clone();
            self.cursor += 1;
            if let Some(w) = self.buffer.push_frame(f)? {
                self.windows += 1;
                return Ok(Some(w));
            }
        }
        Ok(None)
    }

    pub fn script(&self) -> &'a PhaseScript {
        &self.session.script.phases[self.phase]
    }

    /// Current decision time: the end of the latest window, in seconds.
    pub fn time(&self) -> f64 {
        self.windows as f64
    }

    /// 1-based index of the latest window.
    pub fn window_index(&self) -> usize {
        self.windows
    }

    pub fn context(&self) -> BTContext {
        BTContext::for_phase(self.script())
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<PhaseOutcome> {
        self.outcome
    }

    pub fn step(&mut self, action: RobotAction) -> Result<EpisodeStep> {
        if self.outcome.is_some() {
            return Err(Error::EpisodeTerminated);
        }
        if let Some(o) = resolve_decision(self.script(), self.time(), action)? {
            self.outcome = Some(o);
            return Ok(EpisodeStep::Terminal(o));
        }
        match self.next_window()? {
            Some(w) => Ok(EpisodeStep::Window(w)),
            None => {
                let o = resolve_decision(self.script(), self.script().t_trigger, RobotAction::Wait)?
                    .expect("waiting at the trigger ends the episode");
                self.outcome = Some(o);
                Ok(EpisodeStep::Terminal(o))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_session, SimConfig};

    #[test]
    fn always_wait_returns_zero_at_trigger() {
        let s = generate_session(&SimConfig::default(), 2).unwrap();
        for p in 0..s.script.phases.len() {
            let (mut ep, _) = EpisodeStream::new(&s, p).unwrap();
            let mut steps = 1;
            loop {
                match ep.step(RobotAction::Wait).unwrap() {
                    EpisodeStep::Window(w) => {
                        assert_eq!(w.len(), 25);
                        steps += 1;
                    }
                    EpisodeStep::Terminal(o) => {
                        assert_eq!(o.reward, 0.0);
                        break;
                    }
                }
            }
            assert_eq!(steps, s.script.phases[p].decision_steps());
            assert!(matches!(ep.step(RobotAction::Wait), Err(Error::EpisodeTerminated)));
        }
    }

    #[test]
    fn correct_action_one_second_before_trigger_earns_one() {
        let s = generate_session(&SimConfig::default(), 4).unwrap();
        let phase = &s.script.phases[1];
        let (mut ep, _) = EpisodeStream::new(&s, 1).unwrap();
        while ep.time() + 1.0 < phase.t_trigger {
            assert!(matches!(ep.step(RobotAction::Wait).unwrap(), EpisodeStep::Window(_)));
        }
        match ep.step(phase.kind.correct_action()).unwrap() {
            EpisodeStep::Terminal(o) => {
                assert_eq!(o.t_b, 1.0);
                assert_eq!(o.reward, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn acting_at_first_step_is_capped() {
        let s = generate_session(&SimConfig::default(), 4).unwrap();
        let a = &s.script.phases[0];
        assert_eq!(a.t_trigger, 8.0);
        let (mut ep, _) = EpisodeStream::new(&s, 0).unwrap();
        match ep.step(a.kind.correct_action()).unwrap() {
            EpisodeStep::Terminal(o) => {
                assert_eq!(o.t_b, 7.0);
                assert_eq!(o.reward, 4.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn windows_match_session_slices() {
        let s = generate_session(&SimConfig::default(), 6).unwrap();
        let (mut ep, first) = EpisodeStream::new(&s, 0).unwrap();
        assert_eq!(first, s.window(0, 1));
        if let EpisodeStep::Window(w) = ep.step(RobotAction::Wait).unwrap() {
            assert_eq!(w, s.window(0, 2));
        }
    }
}

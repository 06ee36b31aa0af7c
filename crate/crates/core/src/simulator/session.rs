use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::motion::{self, Jitter};
use super::reward::{compute_reward, PhaseKind, RobotAction};
use crate::error::{Error, Result};
use crate::skeleton::{MotionFrame, FPS, WINDOW_FRAMES};

/// Sequence of phases in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPlan {
    /// One delivery, `bubble_rounds` bubble-wrap rounds, one wrap-up.
    Fixed { bubble_rounds: usize },
    /// After each item the human continues or wraps up with equal
    /// probability, with at most `max_rounds` bubble-wrap rounds.
    RandomContinue { max_rounds: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub box_delivery_duration: f64,
    pub bubble_wrap_duration: f64,
    pub wrap_up_duration: f64,
    /// Cue onset as a fraction of the phase duration.
    pub cue_onset_fraction: f64,
    /// Uniform jitter of the cue onset, as a fraction of the phase duration.
    pub cue_jitter_fraction: f64,
    /// Standard deviation of motion noise in meters.
    pub noise_sigma: f64,
    pub plan: SessionPlan,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            box_delivery_duration: 8.0,
            bubble_wrap_duration: 6.0,
            wrap_up_duration: 6.0,
            cue_onset_fraction: 0.35,
            cue_jitter_fraction: 0.05,
            noise_sigma: 0.03,
            plan: SessionPlan::Fixed { bubble_rounds: 4 },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, d) in [
            ("box_delivery_duration", self.box_delivery_duration),
            ("bubble_wrap_duration", self.bubble_wrap_duration),
            ("wrap_up_duration", self.wrap_up_duration),
        ] {
            if !(d >= 2.0 && d.is_finite()) || (d * FPS).fract() != 0.0 {
                return bad(format!("sim.{name} must be a whole number of frames and at least 2 s, got {d}"));
            }
        }
        if !(self.cue_onset_fraction > 0.0 && self.cue_onset_fraction < 1.0) {
            return bad(format!("sim.cue_onset_fraction must lie in (0, 1), got {}", self.cue_onset_fraction));
        }
        let j = self.cue_jitter_fraction;
        if !(j >= 0.0 && self.cue_onset_fraction - j > 0.0 && self.cue_onset_fraction + j < 1.0) {
            return bad(format!("sim.cue_jitter_fraction {j} pushes the cue outside the phase"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("sim.noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    fn duration(&self, kind: PhaseKind) -> f64 {
        match kind {
            PhaseKind::BoxDelivery { .. } => self.box_delivery_duration,
            PhaseKind::BubbleWrap { .. } => self.bubble_wrap_duration,
            PhaseKind::WrapUp { .. } => self.wrap_up_duration,
        }
    }
}

/// Ground truth of one phase. Times are in seconds from the phase start.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScript {
    pub kind: PhaseKind,
    pub duration: f64,
    pub cue_onset: f64,
    pub t_trigger: f64,
    pub noise_sigma: f64,
    /// Items already in the box when the phase starts.
    pub items_placed: usize,
    /// Whether the barcode has been read before this phase.
    pub box_type_known: bool,
    pub keyframes: Vec<motion::Pose>,
}

impl PhaseScript {
    /// Decision times `1, 2, …` strictly before the trigger.
    pub fn decision_steps(&self) -> usize {
        (self.t_trigger.ceil() as usize).saturating_sub(1)
    }

    /// Number of complete windows in the phase.
    pub fn window_count(&self) -> usize {
        (self.duration * FPS).round() as usize / WINDOW_FRAMES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionScript {
    pub seed: u64,
    pub phases: Vec<PhaseScript>,
}

/// A generated session: the script plus per-phase frames. Frame `k` of a
/// phase has timestamp `(k + 1) / FPS`, so window `i` ends at `i` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub script: SessionScript,
    pub frames: Vec<Vec<MotionFrame>>,
}

impl Session {
    /// Frames of window `i` (1-based) of phase `p`.
    pub fn window(&self, p: usize, i: usize) -> &[MotionFrame] {
        &self.frames[p][(i - 1) * WINDOW_FRAMES..i * WINDOW_FRAMES]
    }
}

fn phase_kinds(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<PhaseKind> {
    let box_type = rng.random_range(1..=2u8);
    let position = rng.random_range(1..=2u8);
    let rounds = match cfg.plan {
        SessionPlan::Fixed { bubble_rounds } => bubble_rounds,
        SessionPlan::RandomContinue { max_rounds } => {
            let mut r = 0;
            while r < max_rounds && rng.random_bool(0.5) {
                r += 1;
            }
            r
        }
    };
    let mut kinds = vec![PhaseKind::BoxDelivery { box_type, position }];
    kinds.extend(std::iter::repeat_n(PhaseKind::BubbleWrap { box_type }, rounds));
    kinds.push(PhaseKind::WrapUp { box_type });
    kinds
}

/// Generates a session deterministically from `seed`.
pub fn generate_session(cfg: &SimConfig, seed: u64) -> Result<Session> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = phase_kinds(cfg, &mut rng);
    let mut phases = Vec::with_capacity(kinds.len());
    let mut frames = Vec::with_capacity(kinds.len());
    for (p, &kind) in kinds.iter().enumerate() {
        let duration = cfg.duration(kind);
        let jitter = if cfg.cue_jitter_fraction > 0.0 {
            rng.random_range(-cfg.cue_jitter_fraction..cfg.cue_jitter_fraction)
        } else {
            0.0
        };
        let cue_onset = (cfg.cue_onset_fraction + jitter) * duration;
        let mut keyframes = motion::base_keyframes(kind);
        motion::perturb_keyframes(&mut keyframes, cfg.noise_sigma, &mut rng);
        let script = PhaseScript {
            kind,
            duration,
            cue_onset,
            t_trigger: duration,
            noise_sigma: cfg.noise_sigma,
            items_placed: p,
            box_type_known: p > 0,
            keyframes,
        };
        frames.push(synthesize(&script, &mut rng)?);
        phases.push(script);
    }
    Ok(Session {
        script: SessionScript { seed, phases },
        frames,
    })
}

fn synthesize(script: &PhaseScript, rng: &mut ChaCha8Rng) -> Result<Vec<MotionFrame>> {
    let n = (script.duration * FPS).round() as usize;
    let joints = script.keyframes[0].len();
    let mut jitter = Jitter::new(joints, script.noise_sigma, rng);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k + 1) as f64 / FPS;
        let mut pose = motion::catmull_rom(&script.keyframes, script.duration, t);
        motion::apply_cue(&mut pose, script.kind, motion::cue_strength(t, script.cue_onset));
        for (p, e) in pose.iter_mut().zip(jitter.next(rng)) {
            for c in 0..3 {
                p[c] += e[c];
            }
        }
        out.push(MotionFrame::new(pose, t)?);
    }
    Ok(out)
}

/// Mean per-phase reward of an omniscient agent that takes the correct
/// action `reaction_steps` decision intervals after each cue onset.
pub fn oracle_return(script: &SessionScript, reaction_steps: usize) -> f64 {
    if script.phases.is_empty() {
        return 0.0;
    }
    let total: f64 = script
        .phases
        .iter()
        .map(|p| {
            let t_act = p.cue_onset + reaction_steps as f64;
            if t_act >= p.t_trigger {
                0.0
            } else {
                compute_reward(p.kind, p.kind.correct_action(), p.t_trigger - t_act).expect("correct action is never Wait")
            }
        })
        .sum();
    total / script.phases.len() as f64
}

/// Activity classes for auxiliary supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivityClass {
    CarryBox1,
    CarryBox2,
    PlaceBox,
    PlaceBubble,
    WrapUp,
    Idle,
}

impl ActivityClass {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Activity label of window `i` (1-based), judged at the window midpoint.
pub fn window_activity(phase: &PhaseScript, i: usize) -> ActivityClass {
    let mid = i as f64 - 0.5;
    if mid < phase.cue_onset {
        return ActivityClass::Idle;
    }
    match phase.kind {
        PhaseKind::BoxDelivery { .. } if mid >= phase.duration - 1.0 => ActivityClass::PlaceBox,
        PhaseKind::BoxDelivery { box_type: 1, .. } => ActivityClass::CarryBox1,
        PhaseKind::BoxDelivery { .. } => ActivityClass::CarryBox2,
        PhaseKind::BubbleWrap { .. } => ActivityClass::PlaceBubble,
        PhaseKind::WrapUp { .. } => ActivityClass::WrapUp,
    }
}

/// Supervised action label of window `i`: `Wait` until the window ends after
/// the cue onset, then the correct action.
pub fn window_action_label(phase: &PhaseScript, i: usize) -> RobotAction {
    if (i as f64) <= phase.cue_onset {
        RobotAction::Wait
    } else {
        phase.kind.correct_action()
    }
}

/// One line of the label sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLabel {
    pub kind: PhaseKind,
    pub cue_onset: f64,
    pub t_trigger: f64,
}

/// Writes `kind box_type position cue_onset t_trigger` per phase; position is
/// 0 outside box delivery.
pub fn write_labels<W: Write>(mut w: W, script: &SessionScript) -> Result<()> {
    writeln!(w, "# kind box_type position cue_onset t_trigger")?;
    for p in &script.phases {
        let position = match p.kind {
            PhaseKind::BoxDelivery { position, .. } => position,
            _ => 0,
        };
        writeln!(w, "{} {} {} {} {}", p.kind.name(), p.kind.box_type(), position, p.cue_onset, p.t_trigger)?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(r: R) -> Result<Vec<PhaseLabel>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: idx + 1, msg };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", tok.len())));
        }
        let box_type: u8 = tok[1].parse().map_err(|_| err(format!("bad box type `{}`", tok[1])))?;
        let position: u8 = tok[2].parse().map_err(|_| err(format!("bad position `{}`", tok[2])))?;
        let cue_onset: f64 = tok[3].parse().map_err(|_| err(format!("bad cue onset `{}`", tok[3])))?;
        let t_trigger: f64 = tok[4].parse().map_err(|_| err(format!("bad trigger `{}`", tok[4])))?;
        if !(1..=2).contains(&box_type) {
            return Err(err(format!("box type {box_type} outside 1..=2")));
        }
        let kind = match tok[0] {
            "BoxDelivery" if (1..=2).contains(&position) => PhaseKind::BoxDelivery { box_type, position },
            "BubbleWrap" => PhaseKind::BubbleWrap { box_type },
            "WrapUp" => PhaseKind::WrapUp { box_type },
            other => return Err(err(format!("unknown phase `{other}` or bad position"))),
        };
        out.push(PhaseLabel { kind, cue_onset, t_trigger });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::joint;

    fn script_with(kind: PhaseKind, cue_onset: f64, t_trigger: f64) -> SessionScript {
        SessionScript {
            seed: 0,
            phases: vec![PhaseScript {
                kind,
                duration: t_trigger,
                cue_onset,
                t_trigger,
                noise_sigma: 0.0,
                items_placed: 0,
                box_type_known: false,
                keyframes: vec![],
            }],
        }
    }

    #[test]
    fn default_session_layout() {
        let s = generate_session(&SimConfig::default(), 3).unwrap();
        let names: Vec<_> = s.script.phases.iter().map(|p| p.kind.name()).collect();
        assert_eq!(names, ["BoxDelivery", "BubbleWrap", "BubbleWrap", "BubbleWrap", "BubbleWrap", "WrapUp"]);
        let box_type = s.script.phases[0].kind.box_type();
        for p in &s.script.phases {
            assert_eq!(p.kind.box_type(), box_type);
            assert!(0.0 < p.cue_onset && p.cue_onset < p.t_trigger && p.t_trigger <= p.duration);
        }
        assert_eq!(s.frames[0].len(), 200);
        assert_eq!(s.frames[1].len(), 150);
        assert_eq!(s.script.phases[0].decision_steps(), 7);
        assert_eq!(s.script.phases[0].window_count(), 8);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimConfig::default();
        let a = generate_session(&cfg, 42).unwrap();
        let b = generate_session(&cfg, 42).unwrap();
        let bits = |s: &Session| -> Vec<u64> { s.frames.iter().flatten().flat_map(|f| f.joints.iter().flatten().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&generate_session(&cfg, 43).unwrap()));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = SimConfig { noise_sigma: -1.0, ..SimConfig::default() };
        assert!(generate_session(&cfg, 0).is_err());
        cfg.noise_sigma = 0.0;
        cfg.cue_onset_fraction = 1.0;
        assert!(generate_session(&cfg, 0).is_err());
    }

    fn geometric_type(frame: &MotionFrame) -> u8 {
        if motion::wrist_distance(&frame.joints) > 2.0 * motion::WRIST_HALF_SPAN {
            1
        } else {
            2
        }
    }

    #[test]
    fn noise_free_cue_is_perfectly_separable() {
        let cfg = SimConfig { noise_sigma: 0.0, ..SimConfig::default() };
        for seed in 0..40 {
            let s = generate_session(&cfg, seed).unwrap();
            let p = &s.script.phases[0];
            let truth = p.kind.box_type();
            let mut checked = 0;
            for f in s.frames[0].iter().filter(|f| f.timestamp > p.cue_onset) {
                assert_eq!(geometric_type(f), truth, "seed {seed} t {}", f.timestamp);
                checked += 1;
            }
            assert!(checked > 100);
            // Before the onset both types look the same.
            for f in s.frames[0].iter().filter(|f| f.timestamp <= p.cue_onset) {
                assert!((motion::wrist_distance(&f.joints) - 0.4).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn huge_noise_reduces_oracle_to_chance() {
        let cfg = SimConfig { noise_sigma: 50.0, ..SimConfig::default() };
        let (mut hits, mut total) = (0usize, 0usize);
        for seed in 0..200 {
            let s = generate_session(&cfg, seed).unwrap();
            let p = &s.script.phases[0];
            let last = s.frames[0].last().unwrap();
            assert!(last.timestamp > p.cue_onset);
            hits += (geometric_type(last) == p.kind.box_type()) as usize;
            total += 1;
        }
        let acc = hits as f64 / total as f64;
        // 3σ band of a fair coin over 200 draws.
        assert!((acc - 0.5).abs() < 3.0 * (0.25f64 / 200.0).sqrt(), "accuracy {acc}");
    }

    #[test]
    fn position_cue_follows_placement() {
        let cfg = SimConfig { noise_sigma: 0.0, ..SimConfig::default() };
        for seed in 0..10 {
            let s = generate_session(&cfg, seed).unwrap();
            if let PhaseKind::BoxDelivery { position, .. } = s.script.phases[0].kind {
                let x = s.frames[0].last().unwrap().joints[joint::PELVIS][0];
                assert_eq!(x > 0.0, position == 1);
            }
        }
    }

    #[test]
    fn oracle_return_examples() {
        let a = PhaseKind::BoxDelivery { box_type: 1, position: 1 };
        assert_eq!(oracle_return(&script_with(a, 6.0, 6.0), 0), 0.0);
        assert_eq!(oracle_return(&script_with(a, 2.0, 6.0), 0), 4.0);
        let s = generate_session(&SimConfig::default(), 9).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let r = oracle_return(&s.script, k);
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn random_plan_varies_rounds() {
        let cfg = SimConfig { plan: SessionPlan::RandomContinue { max_rounds: 4 }, ..SimConfig::default() };
        let lens: std::collections::BTreeSet<usize> = (0..50).map(|s| generate_session(&cfg, s).unwrap().script.phases.len()).collect();
        assert!(lens.len() > 2);
        assert!(lens.iter().all(|&l| (2..=6).contains(&l)));
    }

    #[test]
    fn labels_round_trip() {
        let s = generate_session(&SimConfig::default(), 5).unwrap();
        let mut buf = Vec::new();
        write_labels(&mut buf, &s.script).unwrap();
        let back = read_labels(&buf[..]).unwrap();
        assert_eq!(back.len(), 6);
        for (l, p) in back.iter().zip(&s.script.phases) {
            assert_eq!(l.kind, p.kind);
            assert_eq!(l.cue_onset, p.cue_onset);
            assert_eq!(l.t_trigger, p.t_trigger);
        }
        assert!(read_labels(&b"Foo 1 1 1 1\n"[..]).is_err());
    }

    #[test]
    fn window_labels_follow_cue() {
        let s = generate_session(&SimConfig::default(), 1).unwrap();
        let a = &s.script.phases[0];
        assert_eq!(window_action_label(a, 1), RobotAction::Wait);
        assert_eq!(window_action_label(a, 7), a.kind.correct_action());
        assert_eq!(window_activity(a, 1), ActivityClass::Idle);
        assert_eq!(window_activity(a, 8), ActivityClass::PlaceBox);
        assert_eq!(window_activity(&s.script.phases[5], 6), ActivityClass::WrapUp);
    }
}

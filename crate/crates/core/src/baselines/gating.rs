use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::classifier::{Classifier, LabeledEpisode};
use crate::btree::{argmax_wait_ties, BTContext, QPolicy, Window};
use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};
use crate::repr::stack_windows;
use crate::seeds::stream_rng;
use crate::simulator::{resolve_decision, PhaseScript, RobotAction};
use crate::skeleton::{MotionFrame, SkeletonGraph};

/// How predictive samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyMethod {
    /// `passes` dropout samples of the first model.
    Dropout { passes: usize },
    /// One deterministic pass of each of the first `models` models.
    Bootstrap { models: usize },
    /// `passes` dropout samples of each of the first `models` models.
    Both { models: usize, passes: usize },
}

impl UncertaintyMethod {
    pub fn validate(&self, available: usize) -> Result<()> {
        let (k, m) = self.shape();
        if k < 1 || m < 1 || k * m < 2 {
            return Err(Error::Config(format!("{self:?} needs at least two samples per prediction")));
        }
        if matches!(self, Self::Dropout { passes } | Self::Both { passes, .. } if *passes < 2) {
            return Err(Error::Config(format!("{self:?} needs at least two dropout passes")));
        }
        if matches!(self, Self::Bootstrap { models } | Self::Both { models, .. } if *models < 2) {
            return Err(Error::Config(format!("{self:?} needs at least two models")));
        }
        if k > available {
            return Err(Error::InvalidArgument(format!("{self:?} needs {k} models, {available} given")));
        }
        Ok(())
    }

    /// `(models used, passes per model)`.
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            Self::Dropout { passes } => (1, passes),
            Self::Bootstrap { models } => (models, 1),
            Self::Both { models, passes } => (models, passes),
        }
    }

    fn uses_dropout(&self) -> bool {
        !matches!(self, Self::Bootstrap { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dropout { .. } => "dropout",
            Self::Bootstrap { .. } => "bootstrap",
            Self::Both { .. } => "combined",
        }
    }
}

/// Mean probability vector and the mean over classes of the across-sample
/// (population) variance of each class probability.
pub fn mean_and_uncertainty(samples: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let first = samples.first().ok_or_else(|| Error::EmptyDataset("no predictive samples".into()))?;
    let c = first.len();
    if c == 0 || samples.iter().any(|s| s.len() != c) {
        return Err(Error::InvalidArgument("predictive samples must share a non-zero class count".into()));
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; c];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut var = 0.0;
    for s in samples {
        for (m, v) in mean.iter().zip(s) {
            var += (v - m).powi(2);
        }
    }
    Ok((mean, (var / n / c as f64).max(0.0)))
}

/// Argmax of the mean prediction (ties to Wait) and its uncertainty.
pub fn predict_with_uncertainty(samples: &[Vec<f64>]) -> Result<(RobotAction, f64)> {
    let (mean, u) = mean_and_uncertainty(samples)?;
    if mean.len() != RobotAction::COUNT {
        return Err(Error::shape("predict_with_uncertainty", &[mean.len()], &[RobotAction::COUNT]));
    }
    Ok((RobotAction::ALL[argmax_wait_ties(&mean)], u))
}

/// Waits when `uncertainty > tau`. An infinite `tau` is the closed-gate
/// endpoint of a sweep and always waits.
pub fn gated_act(tau: f64, action: RobotAction, uncertainty: f64) -> RobotAction {
    if tau.is_infinite() || uncertainty > tau {
        RobotAction::Wait
    } else {
        action
    }
}

/// Samples for the newest step of a history, in the order: model, pass.
fn step_samples<T: Scalar>(
    models: &[Classifier<T>],
    method: UncertaintyMethod,
    rows: &[Tensor<T>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let (_, passes) = method.shape();
    let mut out = Vec::with_capacity(rows.len() * passes);
    for (model, a1) in models.iter().zip(rows) {
        let trace = super::classifier::HiddenTrace { a1: a1.clone() };
        for _ in 0..passes {
            let p = if method.uses_dropout() {
                model.probabilities(&trace, Some(&mut *rng))?
            } else {
                model.probabilities::<ChaCha8Rng>(&trace, None)?
            };
            out.push(p.data().iter().map(|v| v.to_f64_lossy()).collect());
        }
    }
    Ok(out)
}

/// Ungated prediction and uncertainty at every step of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTrace {
    pub actions: Vec<RobotAction>,
    pub uncertainty: Vec<f64>,
}

/// Decision traces of `episodes`. Dropout masks of episode `e` come from
/// the stream `("mc.{e}", seed)`, drawn step by step.
pub fn decision_traces<T: Scalar>(
    models: &[Classifier<T>],
    method: UncertaintyMethod,
    episodes: &[LabeledEpisode<T>],
    seed: u64,
) -> Result<Vec<DecisionTrace>> {
    method.validate(models.len())?;
    let used = &models[..method.shape().0];
    episodes
        .iter()
        .enumerate()
        .map(|(e, ep)| {
            let traces: Vec<_> = used.iter().map(|m| m.hidden_trace(&ep.windows, &ep.context)).collect::<Result<_>>()?;
            let mut rng = stream_rng(seed, &format!("mc.{e}"));
            let mut out = DecisionTrace { actions: Vec::new(), uncertainty: Vec::new() };
            for i in 0..ep.len() {
                let rows: Vec<_> = traces.iter().map(|t| t.a1.slice_rows(i, i + 1)).collect();
                let (a, u) = predict_with_uncertainty(&step_samples(used, method, &rows, &mut rng)?)?;
                out.actions.push(a);
                out.uncertainty.push(u);
            }
            Ok(out)
        })
        .collect()
}

/// Outcome of replaying a trace with gate `tau`: the reward and the
/// proactive action taken, if any.
pub fn replay_gated(script: &PhaseScript, trace: &DecisionTrace, tau: f64) -> Result<(f64, Option<RobotAction>)> {
    let n = trace.actions.len();
    for i in 0..n {
        let a = gated_act(tau, trace.actions[i], trace.uncertainty[i]);
        if let Some(o) = resolve_decision(script, (i + 1) as f64, a)? {
            return Ok((o.reward, (!o.action.is_wait()).then_some(o.action)));
        }
    }
    let o = resolve_decision(script, script.t_trigger, RobotAction::Wait)?.expect("waiting at the trigger ends the episode");
    Ok((o.reward, None))
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub tau: f64,
    pub mean_reward: f64,
    pub std_reward: f64,
    /// Fraction of episodes with a proactive action.
    pub act_rate: f64,
    /// Fraction of proactive actions that were wrong for the phase.
    pub error_rate: f64,
}

/// The default sweep grid; the last entry is the closed gate.
pub const TAU_GRID: [f64; 11] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, f64::INFINITY];

pub fn threshold_sweep(method: &str, scripts: &[&PhaseScript], traces: &[DecisionTrace], taus: &[f64]) -> Result<Vec<SweepRow>> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    if scripts.len() != traces.len() || scripts.is_empty() {
        return Err(Error::InvalidArgument(format!("{} scripts for {} traces", scripts.len(), traces.len())));
    }
    taus.iter()
        .map(|&tau| {
            let mut rewards = Vec::with_capacity(traces.len());
            let (mut acts, mut errors) = (0usize, 0usize);
            for (s, t) in scripts.iter().zip(traces) {
                let (r, act) = replay_gated(s, t, tau)?;
                rewards.push(r);
                if let Some(a) = act {
                    acts += 1;
                    errors += usize::from(!s.kind.is_correct(a));
                }
            }
            let (mean_reward, std_reward) = crate::drqn::mean_std(&rewards);
            Ok(SweepRow {
                method: method.to_string(),
                tau,
                mean_reward,
                std_reward,
                act_rate: acts as f64 / traces.len() as f64,
                error_rate: if acts == 0 { 0.0 } else { errors as f64 / acts as f64 },
            })
        })
        .collect()
}

/// Row with the highest mean reward; the earliest in grid order on ties.
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.mean_reward >= r.mean_reward => Some(b),
        _ => Some(r),
    })
}

/// Q-node policy backed by the gated classifier: it reports value 1 for the
/// gated action and 0 elsewhere, so the node dispatches exactly when the
/// gate lets a proactive action through. Dropout masks follow
/// [`decision_traces`], with episodes counted by resets.
pub struct GatedClassifierPolicy<T: Scalar> {
    models: Arc<Vec<Classifier<T>>>,
    graph: SkeletonGraph,
    method: UncertaintyMethod,
    tau: f64,
    seed: u64,
    next_episode: u64,
    rng: Option<ChaCha8Rng>,
    history: Vec<Vec<MotionFrame>>,
}

impl<T: Scalar> GatedClassifierPolicy<T> {
    pub fn new(models: Arc<Vec<Classifier<T>>>, graph: SkeletonGraph, method: UncertaintyMethod, tau: f64, seed: u64) -> Result<Self> {
        method.validate(models.len())?;
        Ok(Self { models, graph, method, tau, seed, next_episode: 0, rng: None, history: Vec::new() })
    }
}

impl<T: Scalar> QPolicy for GatedClassifierPolicy<T> {
    fn reset(&mut self) {
        self.rng = Some(stream_rng(self.seed, &format!("mc.{}", self.next_episode)));
        self.next_episode += 1;
        self.history.clear();
    }

    fn q_values(&mut self, window: &Window, context: &BTContext) -> Result<[f64; RobotAction::COUNT]> {
        if self.rng.is_none() {
            self.reset();
        }
        self.history.push(window.frames.clone());
        let refs: Vec<&[MotionFrame]> = self.history.iter().map(Vec::as_slice).collect();
        let x = stack_windows::<T>(&refs, &self.graph)?;
        let n = refs.len();
        let used = &self.models[..self.method.shape().0];
        let rows: Vec<_> = used
            .iter()
            .map(|m| m.hidden_trace(&x, context).map(|t| t.a1.slice_rows(n - 1, n)))
            .collect::<Result<_>>()?;
        let rng = self.rng.as_mut().expect("set above");
        let (a, u) = predict_with_uncertainty(&step_samples(used, self.method, &rows, rng)?)?;
        let mut q = [0.0; RobotAction::COUNT];
        let gated = gated_act(self.tau, a, u);
        if !gated.is_wait() {
            q[gated.index()] = 1.0;
        }
        Ok(q)
    }
}

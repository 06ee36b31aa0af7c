use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::Arc;

use super::config::ExperimentConfig;
use super::output::{artifact, log_event, num, prepare_out_dir, write_csv};
use crate::baselines::{
    best_row, decision_traces, labeled_episodes, threshold_sweep, train_bootstrap, train_classifier, SweepRow, UncertaintyMethod,
};
use crate::btree::{build_packaging_tree, run_session, BTContext, BehaviorTree, QPolicy, Registry, Window};
use crate::drqn::{latent_episodes, train, CurvePoint, DrqnPolicy, LatentEnv, QNet, QNetConfig, TrainedQNet};
use crate::error::{Error, Result};
use crate::numcore::Scalar;
use crate::repr::{stack_windows, train_vae, train_vae_with_aux, EpochStats, VaeModel};
use crate::seeds::derive_seed;
use crate::simulator::{generate_session, oracle_return, window_activity, ActivityClass, PhaseKind, RobotAction, Session};
use crate::skeleton::{MotionFrame, SkeletonGraph};

/// Training and held-out evaluation sessions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Session>,
    pub eval: Vec<Session>,
}

impl Dataset {
    /// Session `i` of the training split has seed `derive_seed(seed,
    /// "data.train.{i}")`, and likewise `data.eval.{i}`.
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        let split = |name: &str, n: usize| -> Result<Vec<Session>> {
            (0..n).map(|i| generate_session(&cfg.sim, derive_seed(cfg.seed, &format!("data.{name}.{i}")))).collect()
        };
        Ok(Self { train: split("train", cfg.sessions)?, eval: split("eval", cfg.eval_sessions)? })
    }

    /// Phase-weighted mean of the oracle return over the evaluation split.
    pub fn eval_oracle(&self, reaction_steps: usize) -> f64 {
        let (mut sum, mut phases) = (0.0, 0);
        for s in &self.eval {
            sum += oracle_return(&s.script, reaction_steps) * s.script.phases.len() as f64;
            phases += s.script.phases.len();
        }
        if phases == 0 {
            0.0
        } else {
            sum / phases as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VaeKey {
    pub latent_dim: usize,
    pub aux: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AgentKey {
    pub vae: VaeKey,
    pub hidden: usize,
}

/// Evaluation of one trained agent on every held-out phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateEval {
    pub replicate: usize,
    pub rewards: Vec<f64>,
    pub acted: Vec<bool>,
}

impl ReplicateEval {
    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards)
    }

    pub fn act_rate(&self) -> f64 {
        self.acted.iter().filter(|&&a| a).count() as f64 / self.acted.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub replicates: Vec<ReplicateEval>,
    /// Mean per-phase reward of a Q-node that never clears the gate.
    pub always_wait: f64,
    /// Oracle return with a one-step reaction.
    pub oracle: f64,
}

impl Evaluation {
    /// Mean and across-replicate sample deviation of per-phase reward.
    pub fn summary(&self) -> (f64, f64) {
        let means: Vec<f64> = self.replicates.iter().map(ReplicateEval::mean_reward).collect();
        (mean(&means), sample_std(&means))
    }
}

/// Outcome of the end-to-end pipeline.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub vae_trace: Vec<EpochStats>,
    /// One learning curve per replicate.
    pub curves: Vec<Vec<CurvePoint>>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ahead,
    Tie,
    Behind,
}

impl Verdict {
    /// Compares a paired mean gap against twice its standard error.
    pub fn from_gaps(gaps: &[f64]) -> Self {
        let m = mean(gaps);
        let se = sample_std(gaps) / (gaps.len() as f64).sqrt();
        if m - 2.0 * se > 0.0 {
            Verdict::Ahead
        } else if m + 2.0 * se < 0.0 {
            Verdict::Behind
        } else {
            Verdict::Tie
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Ahead => "ahead",
            Verdict::Tie => "tie",
            Verdict::Behind => "behind",
        }
    }
}

/// One line of the benchmark report. Gap fields compare the RL agent with
/// this row, paired by replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub tau: Option<f64>,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub gap_mean: Option<f64>,
    pub gap_std: Option<f64>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    /// RL, the three baselines at their best τ, and always-wait.
    pub rows: Vec<BenchmarkRow>,
    /// Threshold sweep aggregated over replicates.
    pub sweep: Vec<SweepRow>,
    pub replicate_sweeps: Vec<Vec<SweepRow>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub latent_dim: usize,
    pub hidden: usize,
    /// Across-replicate mean and sample deviation at each iteration.
    pub curve: Vec<(f64, f64)>,
    pub finals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxComparison {
    pub unsupervised: Vec<(f64, f64)>,
    pub auxiliary: Vec<(f64, f64)>,
    pub unsupervised_finals: Vec<f64>,
    pub auxiliary_finals: Vec<f64>,
}

impl AuxComparison {
    /// `(mean, sample std)` of the unsupervised and auxiliary finals.
    pub fn finals(&self) -> ((f64, f64), (f64, f64)) {
        let s = |v: &[f64]| (mean(v), sample_std(v));
        (s(&self.unsupervised_finals), s(&self.auxiliary_finals))
    }

    /// Whether the auxiliary final mean lies within the unsupervised mean
    /// ± 2 standard deviations.
    pub fn within_band(&self) -> bool {
        let ((u, sd), (a, _)) = self.finals();
        (a - u).abs() <= 2.0 * sd
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; 0 below two values.
pub(crate) fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn curve_band(curves: &[&[CurvePoint]]) -> Vec<(f64, f64)> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let v: Vec<f64> = curves.iter().map(|c| c[i].mean_reward).collect();
            (mean(&v), sample_std(&v))
        })
        .collect()
}

fn finals(agents: &[TrainedQNet<impl Scalar>]) -> Vec<f64> {
    agents.iter().map(|a| a.curve.last().map_or(0.0, |p| p.mean_reward)).collect()
}

struct AlwaysWait;

impl QPolicy for AlwaysWait {
    fn reset(&mut self) {}

    fn q_values(&mut self, _: &Window, _: &BTContext) -> Result<[f64; RobotAction::COUNT]> {
        Ok([0.0; RobotAction::COUNT])
    }
}

/// Runs every evaluation phase through the packaging tree with `policy` on
/// its Q-node.
fn run_tree(sessions: &[Session], policy: Box<dyn QPolicy>, v_min: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut reg = Registry::new();
    reg.v_min = v_min;
    reg.add_policy("q", policy);
    let mut tree = BehaviorTree::new(&build_packaging_tree("q"))?;
    let (mut rewards, mut acted) = (Vec::new(), Vec::new());
    for s in sessions {
        for run in run_session(&mut tree, &mut reg, s)? {
            rewards.push(run.outcome.reward);
            acted.push(run.reactive.is_none() && !run.outcome.action.is_wait());
        }
    }
    Ok((rewards, acted))
}

/// Lazily computed experiment state. Every product is a function of the
/// configuration alone, so results do not depend on the order of requests.
pub struct Experiment<T: Scalar> {
    cfg: ExperimentConfig,
    graph: SkeletonGraph,
    data: Option<Arc<Dataset>>,
    vaes: BTreeMap<VaeKey, Arc<VaeModel<T>>>,
    vae_traces: BTreeMap<VaeKey, Vec<EpochStats>>,
    envs: BTreeMap<VaeKey, Arc<(LatentEnv, LatentEnv)>>,
    agents: BTreeMap<AgentKey, Arc<Vec<TrainedQNet<T>>>>,
    evaluation: Option<Evaluation>,
}

impl<T: Scalar> Experiment<T> {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.precision != T::PRECISION {
            return Err(Error::Config(format!(
                "precision {} requested but the experiment runs at {}",
                cfg.precision.bits(),
                T::PRECISION.bits()
            )));
        }
        Ok(Self {
            cfg,
            graph: SkeletonGraph::default_body(),
            data: None,
            vaes: BTreeMap::new(),
            vae_traces: BTreeMap::new(),
            envs: BTreeMap::new(),
            agents: BTreeMap::new(),
            evaluation: None,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn default_vae(&self) -> VaeKey {
        VaeKey { latent_dim: self.cfg.vae.latent_dim, aux: false }
    }

    pub fn default_agents(&self) -> AgentKey {
        AgentKey { vae: self.default_vae(), hidden: self.cfg.qnet_hidden }
    }

    fn qnet_config(key: AgentKey) -> QNetConfig {
        QNetConfig { latent_dim: key.vae.latent_dim, context_dim: BTContext::DIM, hidden: key.hidden }
    }

    pub fn data(&mut self) -> Result<Arc<Dataset>> {
        if self.data.is_none() {
            self.data = Some(Arc::new(Dataset::generate(&self.cfg)?));
        }
        Ok(self.data.clone().expect("set above"))
    }

    pub fn vae(&mut self, key: VaeKey) -> Result<Arc<VaeModel<T>>> {
        if let Some(m) = self.vaes.get(&key) {
            return Ok(m.clone());
        }
        let data = self.data()?;
        let mut refs: Vec<&[MotionFrame]> = Vec::new();
        let mut labels = Vec::new();
        for s in &data.train {
            for (p, phase) in s.script.phases.iter().enumerate() {
                for i in 1..=phase.window_count() {
                    refs.push(s.window(p, i));
                    labels.push(window_activity(phase, i).index());
                }
            }
        }
        let windows = stack_windows::<T>(&refs, &self.graph)?;
        let vcfg = crate::repr::VaeConfig { latent_dim: key.latent_dim, ..self.cfg.vae.clone() };
        let (model, trace) = if key.aux {
            let seed = derive_seed(self.cfg.seed, "vae.aux");
            train_vae_with_aux(&windows, &labels, ActivityClass::COUNT, &vcfg, &self.graph, self.cfg.aux_weight, seed)?
        } else {
            train_vae(&windows, &vcfg, &self.graph, derive_seed(self.cfg.seed, "vae"))?
        };
        let model = Arc::new(model);
        self.vaes.insert(key, model.clone());
        self.vae_traces.insert(key, trace);
        Ok(model)
    }

    fn envs(&mut self, key: VaeKey) -> Result<Arc<(LatentEnv, LatentEnv)>> {
        if let Some(e) = self.envs.get(&key) {
            return Ok(e.clone());
        }
        let vae = self.vae(key)?;
        let data = self.data()?;
        let train_env = LatentEnv::new(latent_episodes(&data.train, &vae, &self.graph)?)?;
        let eval_env = LatentEnv::new(latent_episodes(&data.eval, &vae, &self.graph)?)?;
        let e = Arc::new((train_env, eval_env));
        self.envs.insert(key, e.clone());
        Ok(e)
    }

    /// Trained agents for `key`, one per replicate. Replicate `r` trains
    /// from seed `derive_seed(seed, "drqn.{r}")` whatever the key.
    pub fn agents(&mut self, key: AgentKey) -> Result<Arc<Vec<TrainedQNet<T>>>> {
        if let Some(a) = self.agents.get(&key) {
            if a.iter().all(|t| !t.curve.is_empty()) {
                return Ok(a.clone());
            }
        }
        let envs = self.envs(key.vae)?;
        let (mut train_env, mut eval_env) = (envs.0.clone(), envs.1.clone());
        let qcfg = Self::qnet_config(key);
        let mut out = Vec::with_capacity(self.cfg.replicates);
        for r in 0..self.cfg.replicates {
            log::info!("drqn {key:?} replicate {r}");
            let seed = derive_seed(self.cfg.seed, &format!("drqn.{r}"));
            out.push(train::<T, _>(&qcfg, &mut train_env, &mut eval_env, &self.cfg.drqn, seed)?);
        }
        let out = Arc::new(out);
        self.agents.insert(key, out.clone());
        self.evaluation = None;
        Ok(out)
    }

    /// Loads the default VAE and agents from the output directory where
    /// present. Loaded agents carry no learning curve.
    pub fn load_checkpoints(&mut self) -> Result<()> {
        let key = self.default_agents();
        let vcfg = self.cfg.vae.clone();
        let vae_path = artifact(&self.cfg, VAE_CKPT);
        if !self.vaes.contains_key(&key.vae) && vae_path.exists() {
            let model = VaeModel::load(BufReader::new(File::open(&vae_path)?), &vcfg, &self.graph, None)?;
            self.vaes.insert(key.vae, Arc::new(model));
        }
        if !self.agents.contains_key(&key) {
            let paths: Vec<_> = (0..self.cfg.replicates).map(|r| artifact(&self.cfg, &qnet_ckpt(r))).collect();
            if paths.iter().all(|p| p.exists()) {
                let qcfg = Self::qnet_config(key);
                let mut out = Vec::new();
                for p in paths {
                    let (net, params) = QNet::load::<T, _>(&qcfg, BufReader::new(File::open(p)?))?;
                    out.push(TrainedQNet { net, params, curve: Vec::new() });
                }
                self.agents.insert(key, Arc::new(out));
            }
        }
        Ok(())
    }

    fn evaluation(&mut self) -> Result<Evaluation> {
        if let Some(e) = &self.evaluation {
            return Ok(e.clone());
        }
        let key = self.default_agents();
        let agents = match self.agents.get(&key) {
            Some(a) => a.clone(),
            None => self.agents(key)?,
        };
        let vae = self.vae(key.vae)?;
        let data = self.data()?;
        let v_min = self.cfg.drqn.v_min;
        let mut replicates = Vec::new();
        for (r, a) in agents.iter().enumerate() {
            let policy = DrqnPolicy::new(vae.clone(), self.graph.clone(), a.net.clone(), Arc::new(a.params.clone()));
            let (rewards, acted) = run_tree(&data.eval, Box::new(policy), v_min)?;
            replicates.push(ReplicateEval { replicate: r, rewards, acted });
        }
        let (wait, _) = run_tree(&data.eval, Box::new(AlwaysWait), v_min)?;
        let e = Evaluation { replicates, always_wait: mean(&wait), oracle: data.eval_oracle(1) };
        self.evaluation = Some(e.clone());
        Ok(e)
    }

    fn begin(&self, stage: &str) -> Result<()> {
        prepare_out_dir(&self.cfg)?;
        log_event(&self.cfg, stage, "start")
    }

    fn tagged<R>(&mut self, stage: &'static str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        let out = self.begin(stage).and_then(|_| f(self));
        match out {
            Ok(r) => {
                log_event(&self.cfg, stage, "done").map_err(|e| e.in_stage(stage))?;
                Ok(r)
            }
            Err(e) => {
                let _ = log_event(&self.cfg, stage, &format!("failed: {e}"));
                Err(e.in_stage(stage))
            }
        }
    }

    /// Writes `sessions.csv`, the ground truth of every generated phase.
    pub fn gen_data(&mut self) -> Result<()> {
        self.tagged("gen-data", |x| {
            let data = x.data()?;
            let mut rows = Vec::new();
            for (split, sessions) in [("train", &data.train), ("eval", &data.eval)] {
                for (i, s) in sessions.iter().enumerate() {
                    for (p, ph) in s.script.phases.iter().enumerate() {
                        let position = match ph.kind {
                            PhaseKind::BoxDelivery { position, .. } => position,
                            _ => 0,
                        };
                        rows.push(vec![
                            split.to_string(),
                            i.to_string(),
                            s.script.seed.to_string(),
                            p.to_string(),
                            ph.kind.name().to_string(),
                            ph.kind.box_type().to_string(),
                            position.to_string(),
                            num(ph.cue_onset),
                            num(ph.t_trigger),
                        ]);
                    }
                }
            }
            let header = ["split", "session", "seed", "phase", "kind", "box_type", "position", "cue_onset", "t_trigger"];
            write_csv(&x.cfg, &artifact(&x.cfg, "sessions.csv"), &header, &rows)
        })
    }

    /// Trains the default VAE; writes `vae.ckpt` and `vae_trace.csv`.
    pub fn train_vae(&mut self) -> Result<Vec<EpochStats>> {
        self.tagged("train-vae", |x| {
            let key = x.default_vae();
            if !x.vae_traces.contains_key(&key) {
                x.vaes.remove(&key);
                x.envs.remove(&key);
            }
            let model = x.vae(key)?;
            model.save(BufWriter::new(File::create(artifact(&x.cfg, VAE_CKPT))?))?;
            let trace = x.vae_traces[&key].clone();
            let rows: Vec<_> = trace
                .iter()
                .map(|s| vec![s.epoch.to_string(), num(s.total), num(s.recon), num(s.kl), num(s.aux), num(s.aux_accuracy)])
                .collect();
            write_csv(&x.cfg, &artifact(&x.cfg, "vae_trace.csv"), &["epoch", "total", "recon", "kl", "aux", "aux_accuracy"], &rows)?;
            Ok(trace)
        })
    }

    /// Trains every replicate of the default agent; writes one checkpoint
    /// per replicate, `learning_curves.csv` and `learning_curve.csv`.
    pub fn train_drqn(&mut self) -> Result<Vec<Vec<CurvePoint>>> {
        self.tagged("train-drqn", |x| {
            let agents = x.agents(x.default_agents())?;
            let mut rows = Vec::new();
            for (r, a) in agents.iter().enumerate() {
                a.net.save(&a.params, BufWriter::new(File::create(artifact(&x.cfg, &qnet_ckpt(r)))?))?;
                for p in &a.curve {
                    rows.push(vec![r.to_string(), p.iteration.to_string(), num(p.mean_reward), num(p.std_reward), num(p.epsilon)]);
                }
            }
            let header = ["replicate", "iteration", "mean_reward", "std_reward", "epsilon"];
            write_csv(&x.cfg, &artifact(&x.cfg, "learning_curves.csv"), &header, &rows)?;
            let curves: Vec<&[CurvePoint]> = agents.iter().map(|a| a.curve.as_slice()).collect();
            let band = curve_band(&curves);
            let rows: Vec<_> = band
                .iter()
                .zip(curves[0])
                .map(|((m, s), p)| vec![p.iteration.to_string(), num(*m), num(*s), num(p.epsilon)])
                .collect();
            write_csv(&x.cfg, &artifact(&x.cfg, "learning_curve.csv"), &["iteration", "mean_reward", "std_reward", "epsilon"], &rows)?;
            Ok(agents.iter().map(|a| a.curve.clone()).collect())
        })
    }

    /// Runs each trained agent through the behavior tree on the held-out
    /// sessions; writes `evaluation.csv`.
    pub fn evaluate(&mut self) -> Result<Evaluation> {
        self.tagged("evaluate", |x| {
            let e = x.evaluation()?;
            let mut rows = Vec::new();
            for r in &e.replicates {
                let (m, s) = crate::drqn::mean_std(&r.rewards);
                rows.push(vec!["drqn".into(), r.replicate.to_string(), num(m), num(s), num(r.act_rate())]);
            }
            let (m, s) = e.summary();
            let act = mean(&e.replicates.iter().map(ReplicateEval::act_rate).collect::<Vec<_>>());
            rows.push(vec!["drqn".into(), "all".into(), num(m), num(s), num(act)]);
            rows.push(vec!["always_wait".into(), "all".into(), num(e.always_wait), num(0.0), num(0.0)]);
            rows.push(vec!["oracle".into(), "all".into(), num(e.oracle), num(0.0), num(1.0)]);
            let header = ["policy", "replicate", "mean_reward", "std_reward", "act_rate"];
            write_csv(&x.cfg, &artifact(&x.cfg, "evaluation.csv"), &header, &rows)?;
            Ok(e)
        })
    }

    /// gen-data, train-vae, train-drqn and evaluate in sequence.
    pub fn run_pipeline(&mut self) -> Result<RunRecord> {
        self.gen_data()?;
        let vae_trace = self.train_vae()?;
        let curves = self.train_drqn()?;
        let evaluation = self.evaluate()?;
        Ok(RunRecord { config_hash: self.cfg.hash(), vae_trace, curves, evaluation })
    }

    /// Trains the gated baselines per replicate and compares them with the
    /// RL agent on the same held-out phases. Writes `baseline_sweep.csv`,
    /// `baseline_sweep_replicates.csv` and `benchmark.csv`.
    pub fn run_benchmark(&mut self) -> Result<BenchmarkReport> {
        self.tagged("benchmark", |x| {
            let rl = x.evaluation()?;
            let report = x.benchmark_inner(&rl)?;
            x.write_benchmark(&report)?;
            Ok(report)
        })
    }

    fn benchmark_inner(&mut self, rl: &Evaluation) -> Result<BenchmarkReport> {
        let data = self.data()?;
        let train_eps = labeled_episodes::<T>(&data.train, &self.graph)?;
        let eval_eps = labeled_episodes::<T>(&data.eval, &self.graph)?;
        let scripts: Vec<_> = eval_eps.iter().map(|e| &e.script).collect();
        let settings = self.cfg.baselines.clone();
        let methods = settings.methods();
        let mut replicate_sweeps = Vec::new();
        for r in 0..self.cfg.replicates {
            let seed = derive_seed(self.cfg.seed, &format!("baselines.{r}"));
            log::info!("baselines replicate {r}");
            let single = vec![train_classifier(&train_eps, &settings.classifier, &self.graph, seed)?];
            let ensemble = train_bootstrap(&train_eps, &settings.classifier, &self.graph, settings.bootstrap_models, seed)?;
            let mut rows = Vec::new();
            for method in methods {
                let models = match method {
                    UncertaintyMethod::Dropout { .. } => &single,
                    _ => &ensemble,
                };
                let traces = decision_traces(models, method, &eval_eps, derive_seed(seed, method.name()))?;
                rows.extend(threshold_sweep(method.name(), &scripts, &traces, &settings.taus)?);
            }
            replicate_sweeps.push(rows);
        }
        let rl_means: Vec<f64> = rl.replicates.iter().map(ReplicateEval::mean_reward).collect();
        let (rl_mean, rl_std) = rl.summary();
        let mut rows = vec![BenchmarkRow {
            method: "drqn".into(),
            tau: None,
            mean_reward: rl_mean,
            std_reward: rl_std,
            gap_mean: None,
            gap_std: None,
            verdict: None,
        }];
        let mut sweep = Vec::new();
        for method in methods {
            let name = method.name();
            let agg: Vec<SweepRow> = settings
                .taus
                .iter()
                .enumerate()
                .map(|(ti, &tau)| {
                    let cells: Vec<&SweepRow> = replicate_sweeps
                        .iter()
                        .map(|rows| rows.iter().filter(|row| row.method == name).nth(ti).expect("one row per tau"))
                        .collect();
                    let pick = |f: fn(&SweepRow) -> f64| cells.iter().map(|c| f(c)).collect::<Vec<f64>>();
                    let means = pick(|c| c.mean_reward);
                    SweepRow {
                        method: name.to_string(),
                        tau,
                        mean_reward: mean(&means),
                        std_reward: sample_std(&means),
                        act_rate: mean(&pick(|c| c.act_rate)),
                        error_rate: mean(&pick(|c| c.error_rate)),
                    }
                })
                .collect();
            let best = best_row(&agg).expect("tau grid is not empty").clone();
            let ti = agg.iter().position(|r| *r == best).expect("best row comes from the list");
            let gaps: Vec<f64> = replicate_sweeps
                .iter()
                .zip(&rl_means)
                .map(|(rows, rl)| rl - rows.iter().filter(|row| row.method == name).nth(ti).expect("one row per tau").mean_reward)
                .collect();
            rows.push(BenchmarkRow {
                method: name.to_string(),
                tau: Some(best.tau),
                mean_reward: best.mean_reward,
                std_reward: best.std_reward,
                gap_mean: Some(mean(&gaps)),
                gap_std: Some(sample_std(&gaps)),
                verdict: Some(Verdict::from_gaps(&gaps)),
            });
            sweep.extend(agg);
        }
        let wait_gaps: Vec<f64> = rl_means.iter().map(|m| m - rl.always_wait).collect();
        rows.push(BenchmarkRow {
            method: "always_wait".into(),
            tau: None,
            mean_reward: rl.always_wait,
            std_reward: 0.0,
            gap_mean: Some(mean(&wait_gaps)),
            gap_std: Some(sample_std(&wait_gaps)),
            verdict: Some(Verdict::from_gaps(&wait_gaps)),
        });
        Ok(BenchmarkReport { rows, sweep, replicate_sweeps })
    }

    fn write_benchmark(&self, report: &BenchmarkReport) -> Result<()> {
        let sweep_row = |r: &SweepRow| vec![r.method.clone(), num(r.tau), num(r.mean_reward), num(r.std_reward), num(r.act_rate), num(r.error_rate)];
        let header = ["method", "tau", "mean_reward", "std_reward", "act_rate", "error_rate"];
        let rows: Vec<_> = report.sweep.iter().map(sweep_row).collect();
        write_csv(&self.cfg, &artifact(&self.cfg, "baseline_sweep.csv"), &header, &rows)?;
        let mut rows = Vec::new();
        for (r, sweep) in report.replicate_sweeps.iter().enumerate() {
            for row in sweep {
                let mut cells = vec![r.to_string()];
                cells.extend(sweep_row(row));
                rows.push(cells);
            }
        }
        let header = ["replicate", "method", "tau", "mean_reward", "std_reward", "act_rate", "error_rate"];
        write_csv(&self.cfg, &artifact(&self.cfg, "baseline_sweep_replicates.csv"), &header, &rows)?;
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let rows: Vec<_> = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    opt(r.tau),
                    num(r.mean_reward),
                    num(r.std_reward),
                    opt(r.gap_mean),
                    opt(r.gap_std),
                    r.verdict.map(|v| v.name().to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        let header = ["method", "tau", "mean_reward", "std_reward", "gap_mean", "gap_std", "verdict"];
        write_csv(&self.cfg, &artifact(&self.cfg, "benchmark.csv"), &header, &rows)
    }

    /// Trains every (latent, hidden) cell of the sweep grid; writes
    /// `sweep.csv` and `sweep_summary.csv`.
    pub fn run_sweep(&mut self) -> Result<Vec<SweepCell>> {
        self.tagged("sweep", |x| {
            let mut cells = Vec::new();
            for &latent_dim in &x.cfg.sweep_latent.clone() {
                for &hidden in &x.cfg.sweep_hidden.clone() {
                    let agents = x.agents(AgentKey { vae: VaeKey { latent_dim, aux: false }, hidden })?;
                    let curves: Vec<&[CurvePoint]> = agents.iter().map(|a| a.curve.as_slice()).collect();
                    cells.push(SweepCell { latent_dim, hidden, curve: curve_band(&curves), finals: finals(&agents) });
                }
            }
            let mut rows = Vec::new();
            for c in &cells {
                for (i, (m, s)) in c.curve.iter().enumerate() {
                    rows.push(vec![c.latent_dim.to_string(), c.hidden.to_string(), i.to_string(), num(*m), num(*s)]);
                }
            }
            let header = ["latent_dim", "hidden", "iteration", "mean_reward", "std_reward"];
            write_csv(&x.cfg, &artifact(&x.cfg, "sweep.csv"), &header, &rows)?;
            let rows: Vec<_> = cells
                .iter()
                .map(|c| vec![c.latent_dim.to_string(), c.hidden.to_string(), num(mean(&c.finals)), num(sample_std(&c.finals))])
                .collect();
            write_csv(&x.cfg, &artifact(&x.cfg, "sweep_summary.csv"), &["latent_dim", "hidden", "final_mean", "final_std"], &rows)?;
            Ok(cells)
        })
    }

    /// Trains the default agent on the unsupervised and on the
    /// auxiliary-loss representation; writes `aux_compare.csv` and
    /// `aux_summary.csv`.
    pub fn run_aux_comparison(&mut self) -> Result<AuxComparison> {
        self.tagged("aux-compare", |x| {
            let base = x.default_agents();
            let aux_key = AgentKey { vae: VaeKey { aux: true, ..base.vae }, ..base };
            let unsup = x.agents(base)?;
            let aux = x.agents(aux_key)?;
            let band = |a: &[TrainedQNet<T>]| curve_band(&a.iter().map(|t| t.curve.as_slice()).collect::<Vec<_>>());
            let cmp = AuxComparison {
                unsupervised: band(&unsup),
                auxiliary: band(&aux),
                unsupervised_finals: finals(&unsup),
                auxiliary_finals: finals(&aux),
            };
            let rows: Vec<_> = cmp
                .unsupervised
                .iter()
                .zip(&cmp.auxiliary)
                .enumerate()
                .map(|(i, (u, a))| vec![i.to_string(), num(u.0), num(u.1), num(a.0), num(a.1)])
                .collect();
            let header = ["iteration", "unsup_mean", "unsup_std", "aux_mean", "aux_std"];
            write_csv(&x.cfg, &artifact(&x.cfg, "aux_compare.csv"), &header, &rows)?;
            let ((um, us), (am, asd)) = cmp.finals();
            let row = vec![
                num(um),
                num(us),
                num(am),
                num(asd),
                num(am - um),
                num(um - 2.0 * us),
                num(um + 2.0 * us),
                cmp.within_band().to_string(),
            ];
            let header = [
                "unsup_final_mean",
                "unsup_final_std",
                "aux_final_mean",
                "aux_final_std",
                "difference",
                "band_low",
                "band_high",
                "within_band",
            ];
            write_csv(&x.cfg, &artifact(&x.cfg, "aux_summary.csv"), &header, &[row])?;
            Ok(cmp)
        })
    }
}

pub const VAE_CKPT: &str = "vae.ckpt";

pub fn qnet_ckpt(replicate: usize) -> String {
    format!("qnet_{replicate}.ckpt")
}

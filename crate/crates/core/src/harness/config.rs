use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baselines::{ClassifierConfig, UncertaintyMethod, TAU_GRID};
use crate::drqn::TrainConfig;
use crate::error::{Error, Result};
use crate::numcore::Precision;
use crate::repr::{VaeConfig, DEFAULT_AUX_WEIGHT};
use crate::simulator::{SessionPlan, SimConfig};

/// Uncertainty-gated classifier baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSettings {
    pub classifier: ClassifierConfig,
    pub bootstrap_models: usize,
    pub dropout_passes: usize,
    pub taus: Vec<f64>,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self { classifier: ClassifierConfig::default(), bootstrap_models: 5, dropout_passes: 20, taus: TAU_GRID.to_vec() }
    }
}

impl BaselineSettings {
    /// The three gated baselines in report order.
    pub fn methods(&self) -> [UncertaintyMethod; 3] {
        [
            UncertaintyMethod::Dropout { passes: self.dropout_passes },
            UncertaintyMethod::Bootstrap { models: self.bootstrap_models },
            UncertaintyMethod::Both { models: self.bootstrap_models, passes: self.dropout_passes },
        ]
    }
}

/// Everything that determines an experiment's outputs, plus where to put
/// them. The output directory is not part of the echo or the hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub precision: Precision,
    pub sessions: usize,
    pub eval_sessions: usize,
    pub sim: SimConfig,
    pub vae: VaeConfig,
    pub aux_weight: f64,
    pub qnet_hidden: usize,
    pub drqn: TrainConfig,
    /// Independent training replicates per configuration.
    pub replicates: usize,
    pub sweep_latent: Vec<usize>,
    pub sweep_hidden: Vec<usize>,
    pub baselines: BaselineSettings,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F32,
            sessions: 200,
            eval_sessions: 50,
            sim: SimConfig::default(),
            vae: VaeConfig::default(),
            aux_weight: DEFAULT_AUX_WEIGHT,
            qnet_hidden: 64,
            drqn: TrainConfig::default(),
            replicates: 5,
            sweep_latent: vec![8, 16, 32],
            sweep_hidden: vec![32, 64],
            baselines: BaselineSettings::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse_one(key, x.trim())).collect()
}

fn parse_four(key: &str, v: &str) -> Result<[usize; 4]> {
    let xs: Vec<usize> = parse_list(key, v)?;
    xs.try_into().map_err(|_| Error::Config(format!("{key}: expected 4 values, got `{v}`")))
}

fn plan_text(p: SessionPlan) -> String {
    match p {
        SessionPlan::Fixed { bubble_rounds } => format!("fixed:{bubble_rounds}"),
        SessionPlan::RandomContinue { max_rounds } => format!("random:{max_rounds}"),
    }
}

fn parse_plan(key: &str, v: &str) -> Result<SessionPlan> {
    let (kind, n) = v.split_once(':').ok_or_else(|| Error::Config(format!("{key}: expected fixed:N or random:N")))?;
    let n = parse_one(key, n.trim())?;
    match kind.trim() {
        "fixed" => Ok(SessionPlan::Fixed { bubble_rounds: n }),
        "random" => Ok(SessionPlan::RandomContinue { max_rounds: n }),
        other => Err(Error::Config(format!("{key}: unknown plan `{other}`"))),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: idx + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let c = &mut self.baselines.classifier;
        match key {
            "seed" => self.seed = parse_one(key, v)?,
            "precision" => {
                self.precision = Precision::from_bits(parse_one(key, v)?)
                    .ok_or_else(|| Error::Config(format!("precision must be 32 or 64, got {v}")))?
            }
            "output.dir" => self.out_dir = PathBuf::from(v),
            "data.sessions" => self.sessions = parse_one(key, v)?,
            "data.eval_sessions" => self.eval_sessions = parse_one(key, v)?,
            "sim.box_delivery_duration" => self.sim.box_delivery_duration = parse_one(key, v)?,
            "sim.bubble_wrap_duration" => self.sim.bubble_wrap_duration = parse_one(key, v)?,
            "sim.wrap_up_duration" => self.sim.wrap_up_duration = parse_one(key, v)?,
            "sim.cue_onset_fraction" => self.sim.cue_onset_fraction = parse_one(key, v)?,
            "sim.cue_jitter_fraction" => self.sim.cue_jitter_fraction = parse_one(key, v)?,
            "sim.noise_sigma" => self.sim.noise_sigma = parse_one(key, v)?,
            "sim.plan" => self.sim.plan = parse_plan(key, v)?,
            "vae.latent_dim" => self.vae.latent_dim = parse_one(key, v)?,
            "vae.beta" => self.vae.beta = parse_one(key, v)?,
            "vae.channels" => self.vae.channels = parse_four(key, v)?,
            "vae.strides" => self.vae.strides = parse_four(key, v)?,
            "vae.kernel" => self.vae.kernel = parse_one(key, v)?,
            "vae.decoder_channels" => self.vae.decoder_channels = parse_one(key, v)?,
            "vae.epochs" => self.vae.epochs = parse_one(key, v)?,
            "vae.batch_size" => self.vae.batch_size = parse_one(key, v)?,
            "vae.learning_rate" => self.vae.learning_rate = parse_one(key, v)?,
            "vae.aux_weight" => self.aux_weight = parse_one(key, v)?,
            "qnet.hidden" => self.qnet_hidden = parse_one(key, v)?,
            "drqn.gamma" => self.drqn.gamma = parse_one(key, v)?,
            "drqn.iterations" => self.drqn.iterations = parse_one(key, v)?,
            "drqn.updates_per_iteration" => self.drqn.updates_per_iteration = parse_one(key, v)?,
            "drqn.batch_size" => self.drqn.batch_size = parse_one(key, v)?,
            "drqn.episodes_per_iteration" => self.drqn.episodes_per_iteration = parse_one(key, v)?,
            "drqn.replay_capacity" => self.drqn.replay_capacity = parse_one(key, v)?,
            "drqn.epsilon_start" => self.drqn.epsilon_start = parse_one(key, v)?,
            "drqn.epsilon_end" => self.drqn.epsilon_end = parse_one(key, v)?,
            "drqn.epsilon_decay_iterations" => self.drqn.epsilon_decay_iterations = parse_one(key, v)?,
            "drqn.target_sync_every" => self.drqn.target_sync_every = parse_one(key, v)?,
            "drqn.learning_rate" => self.drqn.learning_rate = parse_one(key, v)?,
            "drqn.v_min" => self.drqn.v_min = parse_one(key, v)?,
            "run.replicates" => self.replicates = parse_one(key, v)?,
            "sweep.latent_dims" => self.sweep_latent = parse_list(key, v)?,
            "sweep.hidden_sizes" => self.sweep_hidden = parse_list(key, v)?,
            "baselines.channels" => c.channels = parse_four(key, v)?,
            "baselines.strides" => c.strides = parse_four(key, v)?,
            "baselines.kernel" => c.kernel = parse_one(key, v)?,
            "baselines.feature_dim" => c.feature_dim = parse_one(key, v)?,
            "baselines.hidden" => c.hidden = parse_one(key, v)?,
            "baselines.dropout" => c.dropout = parse_one(key, v)?,
            "baselines.epochs" => c.epochs = parse_one(key, v)?,
            "baselines.batch_size" => c.batch_size = parse_one(key, v)?,
            "baselines.learning_rate" => c.learning_rate = parse_one(key, v)?,
            "baselines.bootstrap_models" => self.baselines.bootstrap_models = parse_one(key, v)?,
            "baselines.dropout_passes" => self.baselines.dropout_passes = parse_one(key, v)?,
            "baselines.taus" => self.baselines.taus = parse_list(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.vae.validate()?;
        self.drqn.validate()?;
        self.baselines.classifier.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.sessions == 0 || self.eval_sessions == 0 {
            return bad("data.sessions and data.eval_sessions must be positive");
        }
        if self.replicates == 0 {
            return bad("run.replicates must be positive");
        }
        if self.qnet_hidden == 0 || self.sweep_latent.contains(&0) || self.sweep_hidden.contains(&0) {
            return bad("hidden sizes and latent dimensions must be positive");
        }
        if self.sweep_latent.is_empty() || self.sweep_hidden.is_empty() {
            return bad("sweep grids must not be empty");
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return bad("vae.aux_weight must be finite and >= 0");
        }
        if self.baselines.bootstrap_models == 0 || self.baselines.dropout_passes == 0 {
            return bad("baselines.bootstrap_models and baselines.dropout_passes must be positive");
        }
        if self.baselines.taus.is_empty() || self.baselines.taus.iter().any(|t| t.is_nan() || *t < 0.0) {
            return bad("baselines.taus must be a non-empty list of values >= 0");
        }
        Ok(())
    }

    /// Canonical `key = value` text of every setting except the output
    /// directory. Parsing it back yields an equal configuration.
    pub fn echo(&self) -> String {
        let c = &self.baselines.classifier;
        let d = &self.drqn;
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("precision", self.precision.bits().to_string()),
            ("data.sessions", self.sessions.to_string()),
            ("data.eval_sessions", self.eval_sessions.to_string()),
            ("sim.box_delivery_duration", self.sim.box_delivery_duration.to_string()),
            ("sim.bubble_wrap_duration", self.sim.bubble_wrap_duration.to_string()),
            ("sim.wrap_up_duration", self.sim.wrap_up_duration.to_string()),
            ("sim.cue_onset_fraction", self.sim.cue_onset_fraction.to_string()),
            ("sim.cue_jitter_fraction", self.sim.cue_jitter_fraction.to_string()),
            ("sim.noise_sigma", self.sim.noise_sigma.to_string()),
            ("sim.plan", plan_text(self.sim.plan)),
            ("vae.latent_dim", self.vae.latent_dim.to_string()),
            ("vae.beta", self.vae.beta.to_string()),
            ("vae.channels", list(&self.vae.channels)),
            ("vae.strides", list(&self.vae.strides)),
            ("vae.kernel", self.vae.kernel.to_string()),
            ("vae.decoder_channels", self.vae.decoder_channels.to_string()),
            ("vae.epochs", self.vae.epochs.to_string()),
            ("vae.batch_size", self.vae.batch_size.to_string()),
            ("vae.learning_rate", self.vae.learning_rate.to_string()),
            ("vae.aux_weight", self.aux_weight.to_string()),
            ("qnet.hidden", self.qnet_hidden.to_string()),
            ("drqn.gamma", d.gamma.to_string()),
            ("drqn.iterations", d.iterations.to_string()),
            ("drqn.updates_per_iteration", d.updates_per_iteration.to_string()),
            ("drqn.batch_size", d.batch_size.to_string()),
            ("drqn.episodes_per_iteration", d.episodes_per_iteration.to_string()),
            ("drqn.replay_capacity", d.replay_capacity.to_string()),
            ("drqn.epsilon_start", d.epsilon_start.to_string()),
            ("drqn.epsilon_end", d.epsilon_end.to_string()),
            ("drqn.epsilon_decay_iterations", d.epsilon_decay_iterations.to_string()),
            ("drqn.target_sync_every", d.target_sync_every.to_string()),
            ("drqn.learning_rate", d.learning_rate.to_string()),
            ("drqn.v_min", d.v_min.to_string()),
            ("run.replicates", self.replicates.to_string()),
            ("sweep.latent_dims", list(&self.sweep_latent)),
            ("sweep.hidden_sizes", list(&self.sweep_hidden)),
            ("baselines.channels", list(&c.channels)),
            ("baselines.strides", list(&c.strides)),
            ("baselines.kernel", c.kernel.to_string()),
            ("baselines.feature_dim", c.feature_dim.to_string()),
            ("baselines.hidden", c.hidden.to_string()),
            ("baselines.dropout", c.dropout.to_string()),
            ("baselines.epochs", c.epochs.to_string()),
            ("baselines.batch_size", c.batch_size.to_string()),
            ("baselines.learning_rate", c.learning_rate.to_string()),
            ("baselines.bootstrap_models", self.baselines.bootstrap_models.to_string()),
            ("baselines.dropout_passes", self.baselines.dropout_passes.to_string()),
            ("baselines.taus", list(&self.baselines.taus)),
        ];
        entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::echo`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

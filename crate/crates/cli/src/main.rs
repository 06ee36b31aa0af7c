use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbt_core::harness::{Experiment, ExperimentConfig};
use pbt_core::numcore::{Precision, Scalar};
use pbt_core::Result;

#[derive(Parser)]
#[command(name = "pbt", version, about = "Proactive action-decision experiments on the synthetic packaging task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Floating-point width of all models.
    #[arg(long, global = true, value_parser = ["32", "64"])]
    precision: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate sessions and write their ground truth.
    GenData,
    /// Pretrain the VAE.
    TrainVae,
    /// Train the recurrent Q-network replicates.
    TrainDrqn,
    /// Evaluate trained agents through the behavior tree.
    Evaluate,
    /// Compare the agents with the uncertainty-gated baselines.
    Benchmark,
    /// Latent size by LSTM width sweep.
    Sweep,
    /// Unsupervised versus auxiliary-loss representation.
    AuxCompare,
    /// gen-data, train-vae, train-drqn and evaluate in one go.
    Pipeline,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::parse(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(p) = &c.precision {
        cfg.precision = Precision::from_bits(p.parse().expect("validated by clap")).expect("validated by clap");
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run<T: Scalar>(cfg: ExperimentConfig, cmd: Command) -> Result<()> {
    let mut x = Experiment::<T>::new(cfg)?;
    match cmd {
        Command::GenData => x.gen_data(),
        Command::TrainVae => x.train_vae().map(drop),
        Command::TrainDrqn => {
            x.load_checkpoints()?;
            x.train_drqn().map(drop)
        }
        Command::Evaluate => {
            x.load_checkpoints()?;
            let e = x.evaluate()?;
            let (m, s) = e.summary();
            println!("mean per-phase reward {m:.4} (sd {s:.4} over replicates); oracle {:.4}", e.oracle);
            Ok(())
        }
        Command::Benchmark => {
            x.load_checkpoints()?;
            for r in x.run_benchmark()?.rows {
                let tau = r.tau.map(|t| format!(" tau {t}")).unwrap_or_default();
                let verdict = r.verdict.map(|v| format!(" [rl {}]", v.name())).unwrap_or_default();
                println!("{:<12} {:.4} (sd {:.4}){tau}{verdict}", r.method, r.mean_reward, r.std_reward);
            }
            Ok(())
        }
        Command::Sweep => {
            for c in x.run_sweep()? {
                println!("latent {:>3} hidden {:>3}: final {:?}", c.latent_dim, c.hidden, c.finals);
            }
            Ok(())
        }
        Command::AuxCompare => {
            let c = x.run_aux_comparison()?;
            let ((um, us), (am, asd)) = c.finals();
            println!("unsupervised {um:.4} (sd {us:.4}); auxiliary {am:.4} (sd {asd:.4}); within band: {}", c.within_band());
            Ok(())
        }
        Command::Pipeline => {
            let r = x.run_pipeline()?;
            let (m, s) = r.evaluation.summary();
            println!("config {}: mean per-phase reward {m:.4} (sd {s:.4})", r.config_hash);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = load_config(&cli.common).and_then(|cfg| match cfg.precision {
        Precision::F32 => run::<f32>(cfg, cli.command),
        Precision::F64 => run::<f64>(cfg, cli.command),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Configuration, seeding and orchestration of the end-to-end experiments,
//! with CSV emission.

mod config;
mod experiment;
mod output;

pub use config::{BaselineSettings, ExperimentConfig};
pub use experiment::{
    qnet_ckpt, AgentKey, AuxComparison, BenchmarkReport, BenchmarkRow, Dataset, Evaluation, Experiment, ReplicateEval, RunRecord,
    SweepCell, VaeKey, Verdict, VAE_CKPT,
};
pub use output::{log_event, preamble, prepare_out_dir, write_csv, CONFIG_FILE, LOG_FILE};

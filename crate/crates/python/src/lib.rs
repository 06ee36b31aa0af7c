//! Python bindings: configuration, simulator ground truth and the
//! end-to-end pipeline.

use std::collections::HashMap;
use std::path::PathBuf;

use pbt_core::harness::{Experiment, ExperimentConfig};
use pbt_core::numcore::Precision;
use pbt_core::simulator::{generate_session, oracle_return as oracle, SimConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: pbt_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim(noise_sigma: f64) -> PyResult<SimConfig> {
    let cfg = SimConfig { noise_sigma, ..SimConfig::default() };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Canonical text of the default configuration.
#[pyfunction]
fn default_config() -> String {
    ExperimentConfig::default().echo()
}

/// Hash of a configuration given as `key = value` text.
#[pyfunction]
fn config_hash(text: &str) -> PyResult<String> {
    Ok(ExperimentConfig::parse(text).map_err(py_err)?.hash())
}

/// `(kind, box_type, cue_onset, t_trigger)` for every phase of a session.
#[pyfunction]
#[pyo3(signature = (seed, noise_sigma = 0.03))]
fn session_phases(seed: u64, noise_sigma: f64) -> PyResult<Vec<(String, u8, f64, f64)>> {
    let s = generate_session(&sim(noise_sigma)?, seed).map_err(py_err)?;
    Ok(s.script.phases.iter().map(|p| (p.kind.name().to_string(), p.kind.box_type(), p.cue_onset, p.t_trigger)).collect())
}

/// Mean per-phase reward of the omniscient agent on one session.
#[pyfunction]
#[pyo3(signature = (seed, noise_sigma = 0.03, reaction_steps = 1))]
fn oracle_return(seed: u64, noise_sigma: f64, reaction_steps: usize) -> PyResult<f64> {
    let s = generate_session(&sim(noise_sigma)?, seed).map_err(py_err)?;
    Ok(oracle(&s.script, reaction_steps))
}

/// Runs gen-data, train-vae, train-drqn and evaluate, writing artifacts to
/// `out_dir`. Returns the config hash and the evaluation summary.
#[pyfunction]
fn run_pipeline(config_text: &str, out_dir: &str) -> PyResult<(String, HashMap<String, f64>)> {
    let mut cfg = ExperimentConfig::parse(config_text).map_err(py_err)?;
    cfg.out_dir = PathBuf::from(out_dir);
    let record = match cfg.precision {
        Precision::F32 => Experiment::<f32>::new(cfg).and_then(|mut x| x.run_pipeline()),
        Precision::F64 => Experiment::<f64>::new(cfg).and_then(|mut x| x.run_pipeline()),
    }
    .map_err(py_err)?;
    let (mean, std) = record.evaluation.summary();
    let summary = HashMap::from([
        ("mean_reward".to_string(), mean),
        ("std_reward".to_string(), std),
        ("always_wait".to_string(), record.evaluation.always_wait),
        ("oracle".to_string(), record.evaluation.oracle),
    ]);
    Ok((record.config_hash, summary))
}

#[pymodule]
fn pbt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(session_phases, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_return, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}

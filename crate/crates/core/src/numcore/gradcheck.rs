use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamSet};
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Coordinates excluded because their difference interval crossed a kink.
    pub skipped: usize,
    pub rel_tol: f64,
    pub passed: bool,
}

/// Compares analytic gradients against central differences.
///
/// `loss_and_grad` must be deterministic: it evaluates the loss at the
/// current parameter values and accumulates gradients into `params`.
/// At most `max_coords` coordinates are checked, drawn uniformly with
/// `seed` when the parameter count is larger.
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, f)` with
/// floor `f = 1e-6·max(1, |loss|)`, which keeps round-off in the numeric
/// difference of large losses from dominating near-zero gradients.
pub fn grad_check<F>(mut loss_and_grad: F, params: &mut ParamSet<f64>, rel_tol: f64, max_coords: usize, seed: u64) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamSet<f64>) -> Result<f64>,
{
    check_impl(|ps| Ok((loss_and_grad(ps)?, 0)), params, rel_tol, max_coords, seed)
}

/// [`grad_check`] for piecewise-smooth losses. The closure also returns a
/// fingerprint of its active pieces (e.g. ReLU on/off pattern); coordinates
/// whose `±FD_STEP` evaluations change the fingerprint straddle a kink and
/// are counted in `skipped` instead of compared.
pub fn grad_check_piecewise<F>(
    loss_and_grad: F,
    params: &mut ParamSet<f64>,
    rel_tol: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamSet<f64>) -> Result<(f64, u64)>,
{
    check_impl(loss_and_grad, params, rel_tol, max_coords, seed)
}

fn check_impl<F>(mut loss_and_grad: F, params: &mut ParamSet<f64>, rel_tol: f64, max_coords: usize, seed: u64) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamSet<f64>) -> Result<(f64, u64)>,
{
    params.zero_grads();
    let (loss0, piece0) = loss_and_grad(params)?;
    if !loss0.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    let analytic: Vec<Vec<f64>> = params.ids().map(|id| params.grad(id).data().to_vec()).collect();

    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for id in params.ids() {
        for i in 0..params.value(id).len() {
            coords.push((id, i));
        }
    }
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, coords.len(), max_coords).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|k| coords[k]).collect();
    }

    let floor = 1e-6 * loss0.abs().max(1.0);
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut skipped = 0;
    for &(id, i) in &coords {
        let orig = params.value(id).data()[i];
        params.value_mut(id).data_mut()[i] = orig + FD_STEP;
        let (lp, pp) = loss_and_grad(params)?;
        params.value_mut(id).data_mut()[i] = orig - FD_STEP;
        let (lm, pm) = loss_and_grad(params)?;
        params.value_mut(id).data_mut()[i] = orig;
        if !lp.is_finite() || !lm.is_finite() {
            return Err(Error::NonFinite("grad_check perturbed loss".into()));
        }
        if pp != piece0 || pm != piece0 {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let a = analytic[id.index()][i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > max_rel {
            max_rel = rel;
            worst = Some((params.name(id).to_string(), i));
        }
    }
    params.zero_grads();
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked: coords.len() - skipped,
        skipped,
        worst,
        rel_tol,
        passed: max_rel < rel_tol,
    })
}

//! Keyframe-based synthetic skeleton motion for each phase family.
//!
//! Axes: `x` lateral (positive = the human's left), `y` forward, `z` up. Every
//! joint is stored relative to the pelvis except the pelvis slot itself,
//! which holds the root displacement since the phase started.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::reward::PhaseKind;
use crate::skeleton::joint::*;

pub type Pose = Vec<[f64; 3]>;

/// Keyframes per activity.
pub const KEYFRAMES: usize = 6;
/// Half of the base inter-wrist distance.
pub const WRIST_HALF_SPAN: f64 = 0.2;
/// Lateral wrist offset that encodes box type (wide = type 1).
pub const TYPE_CUE_OFFSET: f64 = 0.12;
/// Lateral walking target that encodes the placement position (1 = left).
pub const POSITION_CUE_OFFSET: f64 = 0.4;
/// Seconds over which a cue fades in after its onset.
pub const CUE_RAMP: f64 = 0.5;
/// Lag-one correlation of the per-joint jitter.
pub const NOISE_ALPHA: f64 = 0.9;

fn rest_pose() -> Pose {
    let mut p = vec![[0.0; 3]; 15];
    p[HEAD] = [0.0, 0.02, 0.68];
    p[NECK] = [0.0, 0.0, 0.5];
    p[L_SHOULDER] = [0.18, 0.0, 0.46];
    p[R_SHOULDER] = [-0.18, 0.0, 0.46];
    p[L_ELBOW] = [0.2, 0.1, 0.22];
    p[R_ELBOW] = [-0.2, 0.1, 0.22];
    p[L_WRIST] = [WRIST_HALF_SPAN, 0.3, 0.1];
    p[R_WRIST] = [-WRIST_HALF_SPAN, 0.3, 0.1];
    p[PELVIS] = [0.0, 0.0, 0.0];
    p[L_HIP] = [0.1, 0.0, -0.05];
    p[R_HIP] = [-0.1, 0.0, -0.05];
    p[L_KNEE] = [0.1, 0.03, -0.48];
    p[R_KNEE] = [-0.1, 0.03, -0.48];
    p[L_ANKLE] = [0.1, 0.0, -0.9];
    p[R_ANKLE] = [-0.1, 0.0, -0.9];
    p
}

/// Sets both wrists symmetric about the body midline at forward `y`, height `z`.
fn set_wrists(p: &mut Pose, y: f64, z: f64) {
    p[L_WRIST] = [WRIST_HALF_SPAN, y, z];
    p[R_WRIST] = [-WRIST_HALF_SPAN, y, z];
    p[L_ELBOW] = [0.2, 0.5 * y, 0.5 * (z + 0.46) - 0.02];
    p[R_ELBOW] = [-0.2, 0.5 * y, 0.5 * (z + 0.46) - 0.02];
}

fn stride(p: &mut Pose, phase: f64) {
    let s = 0.12 * phase;
    p[L_KNEE][1] += s;
    p[L_ANKLE][1] += 1.3 * s;
    p[R_KNEE][1] -= s;
    p[R_ANKLE][1] -= 1.3 * s;
}

/// Canonical keyframes of a phase family. Bubble wrapping and wrap-up share
/// the same base motion, so they are told apart only by their cues.
pub fn base_keyframes(kind: PhaseKind) -> Vec<Pose> {
    let mut frames = Vec::with_capacity(KEYFRAMES);
    match kind {
        PhaseKind::BoxDelivery { .. } => {
            let root_y = [0.0, 0.35, 0.85, 1.35, 1.8, 2.0];
            let wrist = [(0.3, 0.1), (0.35, 0.15), (0.4, 0.2), (0.4, 0.2), (0.42, 0.18), (0.48, 0.05)];
            let gait = [0.0, 1.0, -1.0, 1.0, -1.0, 0.0];
            for m in 0..KEYFRAMES {
                let mut p = rest_pose();
                p[PELVIS] = [0.0, root_y[m], 0.0];
                set_wrists(&mut p, wrist[m].0, wrist[m].1);
                stride(&mut p, gait[m]);
                p[HEAD][1] += 0.03 * (m as f64 % 2.0);
                frames.push(p);
            }
        }
        PhaseKind::BubbleWrap { .. } | PhaseKind::WrapUp { .. } => {
            let sway = [0.0, 0.04, 0.0, -0.04, 0.0, 0.03];
            let wrist = [(0.3, 0.05), (0.42, 0.08), (0.35, 0.12), (0.45, 0.06), (0.32, 0.02), (0.38, 0.07)];
            for m in 0..KEYFRAMES {
                let mut p = rest_pose();
                p[PELVIS] = [sway[m], 0.02 * m as f64, 0.0];
                set_wrists(&mut p, wrist[m].0, wrist[m].1);
                p[HEAD][2] -= 0.03 * (m % 2) as f64;
                frames.push(p);
            }
        }
    }
    frames
}

/// Uniform Catmull-Rom spline through keyframes spread evenly over
/// `[0, duration]`, with clamped end tangents.
pub fn catmull_rom(keys: &[Pose], duration: f64, t: f64) -> Pose {
    let segments = keys.len() - 1;
    let u = (t / duration).clamp(0.0, 1.0) * segments as f64;
    let seg = (u.floor() as usize).min(segments - 1);
    let s = u - seg as f64;
    let at = |i: isize| &keys[i.clamp(0, segments as isize) as usize];
    let (p0, p1, p2, p3) = (at(seg as isize - 1), at(seg as isize), at(seg as isize + 1), at(seg as isize + 2));
    let (s2, s3) = (s * s, s * s * s);
    (0..p1.len())
        .map(|j| {
            let mut out = [0.0; 3];
            for c in 0..3 {
                let (a, b, cc, d) = (p0[j][c], p1[j][c], p2[j][c], p3[j][c]);
                out[c] = 0.5 * (2.0 * b + (cc - a) * s + (2.0 * a - 5.0 * b + 4.0 * cc - d) * s2 + (3.0 * b - a - 3.0 * cc + d) * s3);
            }
            out
        })
        .collect()
}

/// Cubic ease from 0 at the onset to 1 after [`CUE_RAMP`] seconds.
pub fn cue_strength(t: f64, cue_onset: f64) -> f64 {
    let x = ((t - cue_onset) / CUE_RAMP).clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Adds the intent cue of `kind`, scaled by strength `s ∈ [0, 1]`.
pub fn apply_cue(pose: &mut Pose, kind: PhaseKind, s: f64) {
    if s == 0.0 {
        return;
    }
    match kind {
        PhaseKind::BoxDelivery { box_type, position } => {
            let spread = if box_type == 1 { TYPE_CUE_OFFSET } else { -TYPE_CUE_OFFSET } * s;
            pose[L_WRIST][0] += spread;
            pose[R_WRIST][0] -= spread;
            pose[L_ELBOW][0] += 0.5 * spread;
            pose[R_ELBOW][0] -= 0.5 * spread;
            pose[PELVIS][0] += if position == 1 { POSITION_CUE_OFFSET } else { -POSITION_CUE_OFFSET } * s;
        }
        PhaseKind::BubbleWrap { .. } => {
            for j in [L_WRIST, R_WRIST] {
                pose[j][1] += 0.1 * s;
                pose[j][2] += 0.15 * s;
            }
            for j in [L_ELBOW, R_ELBOW] {
                pose[j][2] += 0.08 * s;
            }
        }
        PhaseKind::WrapUp { .. } => {
            for j in [L_WRIST, R_WRIST] {
                pose[j][0] += 0.2 * s;
            }
            for j in [L_ELBOW, R_ELBOW, HEAD] {
                pose[j][0] += 0.1 * s;
            }
        }
    }
}

/// Perturbs every keyframe coordinate with independent `N(0, sigma²)`.
pub fn perturb_keyframes<R: Rng + ?Sized>(keys: &mut [Pose], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    for v in keys.iter_mut().flatten().flatten() {
        *v += n.sample(rng);
    }
}

/// Stationary AR(1) jitter with standard deviation `sigma` per coordinate.
pub struct Jitter {
    state: Vec<[f64; 3]>,
    sigma: f64,
}

impl Jitter {
    pub fn new<R: Rng + ?Sized>(joints: usize, sigma: f64, rng: &mut R) -> Self {
        let mut state = vec![[0.0; 3]; joints];
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            for v in state.iter_mut().flatten() {
                *v = n.sample(rng);
            }
        }
        Self { state, sigma }
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[[f64; 3]] {
        if self.sigma > 0.0 {
            let n = Normal::new(0.0, self.sigma * (1.0 - NOISE_ALPHA * NOISE_ALPHA).sqrt()).expect("finite sigma");
            for v in self.state.iter_mut().flatten() {
                *v = NOISE_ALPHA * *v + n.sample(rng);
            }
        }
        &self.state
    }
}

/// Distance between the wrists of a pose.
pub fn wrist_distance(pose: &[[f64; 3]]) -> f64 {
    let (l, r) = (pose[L_WRIST], pose[R_WRIST]);
    ((l[0] - r[0]).powi(2) + (l[1] - r[1]).powi(2) + (l[2] - r[2]).powi(2)).sqrt()
}

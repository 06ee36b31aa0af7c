use pbt_core::numcore::Tensor;
use pbt_core::repr::{stack_windows, train_vae, train_vae_with_aux, VaeConfig, DEFAULT_AUX_WEIGHT};
use pbt_core::simulator::{generate_session, window_activity, SimConfig};
use pbt_core::skeleton::{MotionFrame, SkeletonGraph};

struct Data {
    windows: Tensor<f32>,
    labels: Vec<usize>,
    post_cue: Vec<bool>,
}

fn data(sessions: u64, noise: f64, first_seed: u64) -> Data {
    let cfg = SimConfig { noise_sigma: noise, ..SimConfig::default() };
    let graph = SkeletonGraph::default_body();
    let all: Vec<_> = (first_seed..first_seed + sessions).map(|s| generate_session(&cfg, s).unwrap()).collect();
    let mut refs: Vec<&[MotionFrame]> = Vec::new();
    let mut labels = Vec::new();
    let mut post_cue = Vec::new();
    for sess in &all {
        for (p, phase) in sess.script.phases.iter().enumerate() {
            for i in 1..=phase.window_count() {
                refs.push(sess.window(p, i));
                labels.push(window_activity(phase, i).index());
                post_cue.push((i - 1) as f64 >= phase.cue_onset);
            }
        }
    }
    Data { windows: stack_windows(&refs, &graph).unwrap(), labels, post_cue }
}

#[test]
fn noiseless_reconstruction_error_is_below_tenth_of_variance() {
    let d = data(30, 0.0, 0);
    let cfg = VaeConfig { epochs: 40, ..VaeConfig::default() };
    let (model, _) = train_vae(&d.windows, &cfg, &SkeletonGraph::default_body(), 1).unwrap();
    let (mse, var) = model.reconstruction_error(&d.windows).unwrap();
    assert!(mse < 0.1 * var, "mse {mse} var {var}");
}

#[test]
fn loss_trace_falls_on_default_data() {
    let d = data(30, SimConfig::default().noise_sigma, 100);
    let cfg = VaeConfig { epochs: 8, ..VaeConfig::default() };
    let (_, trace) = train_vae(&d.windows, &cfg, &SkeletonGraph::default_body(), 2).unwrap();
    let (first, last) = (trace[0].total, trace.last().unwrap().total);
    assert!(last < 0.7 * first, "{first} -> {last}");
    assert!(trace.iter().all(|e| e.kl >= -1e-9 && e.recon.is_finite()));
}

#[test]
fn kl_is_non_increasing_in_beta() {
    let d = data(20, SimConfig::default().noise_sigma, 200);
    let graph = SkeletonGraph::default_body();
    let kls: Vec<f64> = [0.1, 1.0, 4.0]
        .iter()
        .map(|&beta| {
            let cfg = VaeConfig { beta, epochs: 4, ..VaeConfig::default() };
            train_vae(&d.windows, &cfg, &graph, 3).unwrap().1.last().unwrap().kl
        })
        .collect();
    assert!(kls[0] >= kls[1] && kls[1] >= kls[2], "{kls:?}");
}

#[test]
fn auxiliary_head_separates_noiseless_post_cue_windows() {
    let d = data(30, 0.0, 300);
    let cfg = VaeConfig { epochs: 20, ..VaeConfig::default() };
    let graph = SkeletonGraph::default_body();
    let (model, trace) = train_vae_with_aux(&d.windows, &d.labels, 6, &cfg, &graph, DEFAULT_AUX_WEIGHT, 4).unwrap();
    assert!(trace.iter().all(|e| e.aux > 0.0 && e.recon > 0.0));
    let pred = model.aux_predict(&d.windows).unwrap().unwrap();
    let (mut hit, mut n) = (0, 0);
    for ((p, l), post) in pred.iter().zip(&d.labels).zip(&d.post_cue) {
        if *post {
            n += 1;
            hit += usize::from(p == l);
        }
    }
    let acc = hit as f64 / n as f64;
    assert!(acc >= 0.95, "post-cue accuracy {acc} over {n} windows");
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numcore::{grad_check_piecewise, ParamSet, Tensor};
use crate::simulator::{generate_session, window_activity, SimConfig};
use crate::skeleton::{MotionFrame, SkeletonGraph};

fn small_cfg() -> VaeConfig {
    VaeConfig { latent_dim: 4, channels: [4, 6, 6, 8], decoder_channels: 8, ..VaeConfig::default() }
}

fn sim_windows(sessions: u64, noise: f64) -> (Vec<Vec<MotionFrame>>, Vec<usize>) {
    let cfg = SimConfig { noise_sigma: noise, ..SimConfig::default() };
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for s in 0..sessions {
        let sess = generate_session(&cfg, s).unwrap();
        for (p, phase) in sess.script.phases.iter().enumerate() {
            for i in 1..=phase.window_count() {
                windows.push(sess.window(p, i).to_vec());
                labels.push(window_activity(phase, i).index());
            }
        }
    }
    (windows, labels)
}

fn dataset<T: crate::numcore::Scalar>(windows: &[Vec<MotionFrame>]) -> Tensor<T> {
    let refs: Vec<&[MotionFrame]> = windows.iter().map(Vec::as_slice).collect();
    stack_windows(&refs, &SkeletonGraph::default_body()).unwrap()
}

#[test]
fn kl_matches_closed_form_examples() {
    let x = Tensor::<f64>::zeros(&[1, 2]);
    let zero = Tensor::<f64>::zeros(&[1, 2]);
    let (_, _, kl) = vae_loss(&x, &zero, &zero, &x, 1.0).unwrap();
    assert_eq!(kl, 0.0);
    // mean 1, log-variance 0 in each of 2 dims: 2 · ½ = 1.
    let one = Tensor::<f64>::full(&[1, 2], 1.0);
    let (_, _, kl) = vae_loss(&x, &one, &zero, &x, 1.0).unwrap();
    assert!((kl - 1.0).abs() < 1e-12);
    // mean 0, log-variance ln 2 in one dim: ½(2 − 1 − ln 2).
    let lv = Tensor::<f64>::from_f64(&[1, 1], &[2f64.ln()]).unwrap();
    let z1 = Tensor::<f64>::zeros(&[1, 1]);
    let (_, _, kl) = vae_loss(&z1, &z1, &lv, &z1, 1.0).unwrap();
    assert!((kl - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-12);
}

#[test]
fn recon_term_is_half_squared_error_per_window() {
    let x = Tensor::<f64>::zeros(&[2, 3]);
    let r = Tensor::<f64>::full(&[2, 3], 2.0);
    let m = Tensor::<f64>::zeros(&[2, 1]);
    let (total, recon, kl) = vae_loss(&x, &m, &m, &r, 4.0).unwrap();
    assert_eq!(recon, 0.5 * 12.0);
    assert_eq!(kl, 0.0);
    assert_eq!(total, recon);
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let graph = SkeletonGraph::chain(3).unwrap();
    let cfg = small_cfg();
    let mut ps = ParamSet::<f64>::new();
    let net = VaeNet::new(&cfg, &graph, Some(3), &mut ps, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Zero biases put pre-activations exactly on ReLU kinks; move off them.
    for id in ps.ids().collect::<Vec<_>>() {
        let jitter = Tensor::<f64>::uniform(ps.value(id).shape(), 0.05, &mut rng);
        ps.value_mut(id).add_assign(&jitter).unwrap();
    }
    let x = Tensor::<f64>::uniform(&[2, 25, 3, 3], 1.0, &mut rng);
    let eps = standard_normal::<f64, _>(&[2, cfg.latent_dim], &mut rng);
    let labels = [0usize, 2];
    let report = grad_check_piecewise(
        |ps| {
            let loss = net.loss_and_grad(ps, &x, &eps, 0.7, Some((&labels, 0.3)))?.total;
            Ok((loss, net.piece_fingerprint(ps, &x, &eps)?))
        },
        &mut ps,
        1e-4,
        600,
        3,
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.skipped * 10 < report.checked, "{report:?}");
}

#[test]
fn log_variance_clamp_zeroes_gradient_outside() {
    let graph = SkeletonGraph::chain(3).unwrap();
    let cfg = small_cfg();
    let mut ps = ParamSet::<f64>::new();
    let net = VaeNet::new(&cfg, &graph, None, &mut ps, 1).unwrap();
    let head_b = ps.find("enc.head.b").unwrap();
    // Push the log-variance half of the head bias far beyond the clamp.
    for v in &mut ps.value_mut(head_b).data_mut()[cfg.latent_dim..] {
        *v = 50.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::<f64>::uniform(&[1, 25, 3, 3], 0.1, &mut rng);
    let (_, lv, _) = net.encoder_forward(&ps, &x).unwrap();
    assert!(lv.data().iter().all(|&v| v == LOG_VAR_CLAMP));
    let eps = Tensor::<f64>::zeros(&[1, cfg.latent_dim]);
    ps.zero_grads();
    net.loss_and_grad(&mut ps, &x, &eps, 1.0, None).unwrap();
    assert!(ps.grad(head_b).data()[cfg.latent_dim..].iter().all(|&g| g == 0.0));
}

#[test]
fn encode_rejects_wrong_shape() {
    let graph = SkeletonGraph::default_body();
    let model = VaeModel::<f32>::new(&VaeConfig::default(), &graph, Normalizer::identity(45), None, 0).unwrap();
    assert!(model.encode(&Tensor::zeros(&[1, 24, 15, 3])).is_err());
    assert!(model.encode(&Tensor::zeros(&[1, 25, 14, 3])).is_err());
    assert!(model.decode(&Tensor::zeros(&[1, 3])).is_err());
}

#[test]
fn training_is_deterministic_and_checkpoint_round_trips() {
    let (w, _) = sim_windows(2, 0.03);
    let data = dataset::<f32>(&w);
    let cfg = VaeConfig { epochs: 1, ..small_cfg() };
    let graph = SkeletonGraph::default_body();
    let (a, ta) = train_vae(&data, &cfg, &graph, 9).unwrap();
    let (b, tb) = train_vae(&data, &cfg, &graph, 9).unwrap();
    assert!(a.params.values_identical(&b.params));
    assert_eq!(ta, tb);
    let (c, _) = train_vae(&data, &cfg, &graph, 10).unwrap();
    assert!(!a.params.values_identical(&c.params));

    let mut buf = Vec::new();
    a.save(&mut buf).unwrap();
    let loaded = VaeModel::<f32>::load(buf.as_slice(), &cfg, &graph, None).unwrap();
    assert!(loaded.params.values_identical(&a.params));
    let x = data.slice_rows(0, 4);
    assert_eq!(a.encode(&x).unwrap(), loaded.encode(&x).unwrap());

    let other = VaeConfig { latent_dim: 5, ..cfg.clone() };
    assert!(VaeModel::<f32>::load(buf.as_slice(), &other, &graph, None).is_err());
    assert!(VaeModel::<f32>::load(&buf[..buf.len() - 3], &cfg, &graph, None).is_err());
}

#[test]
fn zero_weight_auxiliary_loss_leaves_vae_unchanged() {
    let (w, labels) = sim_windows(1, 0.03);
    let data = dataset::<f32>(&w);
    let cfg = VaeConfig { epochs: 1, ..small_cfg() };
    let graph = SkeletonGraph::default_body();
    let (plain, tp) = train_vae(&data, &cfg, &graph, 4).unwrap();
    let (aux, ta) = train_vae_with_aux(&data, &labels, 6, &cfg, &graph, 0.0, 4).unwrap();
    for (name, v) in plain.params.named_values() {
        let id = aux.params.find(name).unwrap();
        assert_eq!(v, aux.params.value(id), "{name}");
    }
    assert_eq!(tp[0].recon, ta[0].recon);
    assert_eq!(tp[0].kl, ta[0].kl);
}

#[test]
fn aux_rejects_bad_labels() {
    let (w, mut labels) = sim_windows(1, 0.03);
    let data = dataset::<f32>(&w);
    let graph = SkeletonGraph::default_body();
    labels[0] = 6;
    assert!(train_vae_with_aux(&data, &labels, 6, &small_cfg(), &graph, 1.0, 0).is_err());
    assert!(train_vae_with_aux(&data, &labels[1..], 6, &small_cfg(), &graph, 1.0, 0).is_err());
}

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::btree::{build_packaging_tree, run_session, BehaviorTree, Registry};
use crate::simulator::{generate_session, RobotAction, Session, SimConfig};
use crate::skeleton::SkeletonGraph;

fn quick_cfg() -> ClassifierConfig {
    ClassifierConfig { channels: [4, 8, 8, 8], feature_dim: 6, hidden: 8, epochs: 1, ..ClassifierConfig::default() }
}

fn sessions(seeds: std::ops::Range<u64>) -> Vec<Session> {
    seeds.map(|s| generate_session(&SimConfig::default(), s).unwrap()).collect()
}

#[test]
fn uncertainty_examples() {
    let same = vec![vec![0.2, 0.8]; 4];
    assert_eq!(mean_and_uncertainty(&same).unwrap().1, 0.0);
    let (mean, u) = mean_and_uncertainty(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(mean, vec![0.5, 0.5]);
    assert_eq!(u, 0.25);
    assert!(mean_and_uncertainty(&[]).is_err());
    assert!(mean_and_uncertainty(&[vec![1.0], vec![0.5, 0.5]]).is_err());
    let (a, _) = predict_with_uncertainty(&[vec![1.0 / 6.0; 6]]).unwrap();
    assert_eq!(a, RobotAction::Wait);
}

#[test]
fn gate_examples() {
    let lift = RobotAction::LiftBox;
    assert_eq!(gated_act(f64::INFINITY, lift, 0.0), RobotAction::Wait);
    assert_eq!(gated_act(0.0, lift, 1e-12), RobotAction::Wait);
    assert_eq!(gated_act(0.0, lift, 0.0), lift);
    assert_eq!(gated_act(0.3, lift, 0.3), lift);
    assert_eq!(gated_act(0.3, lift, 0.31), RobotAction::Wait);
}

#[test]
fn method_validation() {
    assert!(UncertaintyMethod::Dropout { passes: 1 }.validate(1).is_err());
    assert!(UncertaintyMethod::Bootstrap { models: 1 }.validate(5).is_err());
    assert!(UncertaintyMethod::Bootstrap { models: 5 }.validate(4).is_err());
    assert!(UncertaintyMethod::Both { models: 2, passes: 1 }.validate(2).is_err());
    assert!(UncertaintyMethod::Both { models: 2, passes: 2 }.validate(2).is_ok());
}

#[test]
fn probabilities_sum_to_one_and_dropout_zero_is_deterministic() {
    let graph = SkeletonGraph::default_body();
    let eps = labeled_episodes::<f64>(&sessions(0..1), &graph).unwrap();
    let cfg = ClassifierConfig { dropout: 0.0, ..quick_cfg() };
    let model = train_classifier(&eps[..2], &cfg, &graph, 1).unwrap();
    let trace = model.hidden_trace(&eps[0].windows, &eps[0].context).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = model.probabilities(&trace, Some(&mut rng)).unwrap();
    let b = model.probabilities::<ChaCha8Rng>(&trace, None).unwrap();
    assert_eq!(a, b);
    for row in a.data().chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    let traces = decision_traces(&[model.clone(), model], UncertaintyMethod::Both { models: 2, passes: 3 }, &eps, 0).unwrap();
    assert!(traces.iter().all(|t| t.uncertainty.iter().all(|&u| u.abs() < 1e-15)));
}

#[test]
fn identical_models_have_zero_bootstrap_uncertainty() {
    let graph = SkeletonGraph::default_body();
    let eps = labeled_episodes::<f64>(&sessions(0..1), &graph).unwrap();
    let model = train_classifier(&eps[..2], &quick_cfg(), &graph, 1).unwrap();
    let models = vec![model; 3];
    let traces = decision_traces(&models, UncertaintyMethod::Bootstrap { models: 3 }, &eps, 0).unwrap();
    assert!(traces.iter().all(|t| t.uncertainty.iter().all(|&u| u == 0.0)));
}

#[test]
fn training_is_deterministic_and_bootstrap_members_differ() {
    let graph = SkeletonGraph::default_body();
    let eps = labeled_episodes::<f32>(&sessions(0..1), &graph).unwrap();
    let a = train_classifier(&eps, &quick_cfg(), &graph, 4).unwrap();
    let b = train_classifier(&eps, &quick_cfg(), &graph, 4).unwrap();
    assert!(a.params.values_identical(&b.params));
    let boots = train_bootstrap(&eps, &quick_cfg(), &graph, 3, 4).unwrap();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(!boots[i].params.values_identical(&boots[j].params));
        }
    }
    assert!(train_classifier::<f32>(&[], &quick_cfg(), &graph, 0).is_err());
    let mut bad = eps[0].clone();
    bad.labels.pop();
    assert!(train_classifier(&[bad], &quick_cfg(), &graph, 0).is_err());
}

#[test]
fn sweep_endpoints() {
    let graph = SkeletonGraph::default_body();
    let train = labeled_episodes::<f32>(&sessions(0..2), &graph).unwrap();
    let eval = labeled_episodes::<f32>(&sessions(100..102), &graph).unwrap();
    let models = train_bootstrap(&train, &quick_cfg(), &graph, 2, 5).unwrap();
    let method = UncertaintyMethod::Both { models: 2, passes: 4 };
    let traces = decision_traces(&models, method, &eval, 6).unwrap();
    let scripts: Vec<_> = eval.iter().map(|e| &e.script).collect();
    let max_u = traces.iter().flat_map(|t| t.uncertainty.iter().copied()).fold(0.0, f64::max);
    let rows = threshold_sweep("combined", &scripts, &traces, &[max_u + 1.0, f64::INFINITY]).unwrap();
    assert_eq!(rows[1].mean_reward, 0.0);
    assert_eq!(rows[1].act_rate, 0.0);

    // Above the observed maximum the gate never binds.
    let ungated: Vec<f64> = scripts
        .iter()
        .zip(&traces)
        .map(|(s, t)| {
            let open = DecisionTrace { actions: t.actions.clone(), uncertainty: vec![0.0; t.actions.len()] };
            replay_gated(s, &open, 0.0).unwrap().0
        })
        .collect();
    let mean = ungated.iter().sum::<f64>() / ungated.len() as f64;
    assert!((rows[0].mean_reward - mean).abs() < 1e-12);
    assert!(threshold_sweep("combined", &scripts, &traces, &[]).is_err());
}

#[test]
fn best_row_prefers_earliest_tie() {
    let row = |tau, r| SweepRow { method: "m".into(), tau, mean_reward: r, std_reward: 0.0, act_rate: 0.0, error_rate: 0.0 };
    let rows = [row(0.1, 1.0), row(0.2, 2.0), row(0.3, 2.0), row(f64::INFINITY, 0.0)];
    assert_eq!(best_row(&rows).unwrap().tau, 0.2);
    assert!(best_row(&[]).is_none());
}

#[test]
fn behavior_tree_run_matches_trace_replay() {
    let graph = SkeletonGraph::default_body();
    let train = labeled_episodes::<f64>(&sessions(0..2), &graph).unwrap();
    let eval_sessions = sessions(200..202);
    let eval = labeled_episodes::<f64>(&eval_sessions, &graph).unwrap();
    let models = Arc::new(train_bootstrap(&train, &quick_cfg(), &graph, 2, 8).unwrap());
    let method = UncertaintyMethod::Both { models: 2, passes: 3 };
    let traces = decision_traces(&models, method, &eval, 9).unwrap();
    let mut us: Vec<f64> = traces.iter().flat_map(|t| t.uncertainty.iter().copied()).collect();
    us.sort_by(f64::total_cmp);
    let tau = us[us.len() / 2];

    let mut reg = Registry::new();
    reg.add_policy("q", Box::new(GatedClassifierPolicy::new(models.clone(), graph.clone(), method, tau, 9).unwrap()));
    let mut tree = BehaviorTree::new(&build_packaging_tree("q")).unwrap();
    let mut bt_rewards = Vec::new();
    for s in &eval_sessions {
        bt_rewards.extend(run_session(&mut tree, &mut reg, s).unwrap().iter().map(|r| r.outcome.reward));
    }
    let replayed: Vec<f64> = eval.iter().zip(&traces).map(|(e, t)| replay_gated(&e.script, t, tau).unwrap().0).collect();
    assert_eq!(bt_rewards, replayed);
}

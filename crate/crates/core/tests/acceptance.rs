//! Acceptance suite. Each test checks one criterion and prints one
//! `ACCEPTANCE <n> <name>: PASS|FAIL ...` line straight to stderr, so the
//! lines survive output capture.
//!
//! Criteria 4 to 7 share one default-config experiment; whichever runs
//! first trains the representation and the agents.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use pbt_core::btree::{
    build_packaging_tree, reactive_plan, run_phase, run_session, BTContext, Blackboard, BehaviorTree, Node, NodeKind, NodeStatus,
    QPolicy, Registry, Window,
};
use pbt_core::drqn::{td_loss, td_piece_fingerprint, train, EpisodeRecord, QNet, QNetConfig, ToyMdp, TrainConfig, Transition};
use pbt_core::harness::{Experiment, ExperimentConfig, Verdict};
use pbt_core::numcore::{grad_check, grad_check_piecewise, Dense, GraphConv, Lstm, ParamSet, TemporalConv, Tensor};
use pbt_core::repr::{standard_normal, VaeConfig, VaeNet};
use pbt_core::simulator::{compute_reward, generate_session, resolve_decision, PhaseKind, RobotAction, SimConfig};
use pbt_core::skeleton::{normalized_adjacency, SkeletonGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("ACCEPTANCE {n} {name}: {verdict} ({:.1} s) {detail}\n", started.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn shared() -> MutexGuard<'static, Experiment<f32>> {
    static SHARED: OnceLock<Mutex<Experiment<f32>>> = OnceLock::new();
    SHARED
        .get_or_init(|| {
            let cfg = ExperimentConfig { out_dir: scratch("acceptance-default"), ..ExperimentConfig::default() };
            Mutex::new(Experiment::new(cfg).expect("default config is valid"))
        })
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

// --- 1: gradient correctness ------------------------------------------------

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn layer_checks(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64, bool)> {
    let mut out = Vec::new();

    let mut ps = ParamSet::<f64>::new();
    let dense = Dense::new(&mut ps, "d", 4, 3, rng);
    let xid = ps.add("x", Tensor::uniform(&[2, 4], 1.0, rng));
    let r = Tensor::uniform(&[2, 3], 1.0, rng);
    let rep = grad_check(
        |ps| {
            let x = ps.value(xid).clone();
            let y = dense.forward(ps, &x)?;
            let dx = dense.backward(ps, &x, &r)?;
            ps.grad_mut(xid).add_assign(&dx)?;
            Ok(dot(&y, &r))
        },
        &mut ps,
        1e-4,
        usize::MAX,
        0,
    )
    .unwrap();
    out.push(("dense", rep.max_rel_error, rep.passed));

    let graph = SkeletonGraph::chain(3).unwrap();
    let a = normalized_adjacency::<f64>(&graph);
    let mut ps = ParamSet::<f64>::new();
    let gc = GraphConv::new(&mut ps, "g", 3, 4, rng);
    let xid = ps.add("x", Tensor::uniform(&[2, 25, 3, 3], 1.0, rng));
    let r = Tensor::uniform(&[2, 25, 3, 4], 1.0, rng);
    let rep = grad_check(
        |ps| {
            let x = ps.value(xid).clone();
            let y = gc.forward(ps, &a, &x)?;
            let dx = gc.backward(ps, &a, &x, &r)?;
            ps.grad_mut(xid).add_assign(&dx)?;
            Ok(dot(&y, &r))
        },
        &mut ps,
        1e-4,
        2000,
        1,
    )
    .unwrap();
    out.push(("graph-conv", rep.max_rel_error, rep.passed));

    for stride in [1, 2] {
        let mut ps = ParamSet::<f64>::new();
        let tc = TemporalConv::new(&mut ps, "t", 3, 3, 4, stride, rng);
        let xid = ps.add("x", Tensor::uniform(&[2, 25, 3, 3], 1.0, rng));
        let t_out = (25 - 3) / stride + 1;
        let r = Tensor::uniform(&[2, t_out, 3, 4], 1.0, rng);
        let rep = grad_check(
            |ps| {
                let x = ps.value(xid).clone();
                let y = tc.forward(ps, &x)?;
                let dx = tc.backward(ps, &x, &r)?;
                ps.grad_mut(xid).add_assign(&dx)?;
                Ok(dot(&y, &r))
            },
            &mut ps,
            1e-4,
            2000,
            2,
        )
        .unwrap();
        out.push((if stride == 1 { "temporal-conv s1" } else { "temporal-conv s2" }, rep.max_rel_error, rep.passed));
    }

    let mut ps = ParamSet::<f64>::new();
    let lstm = Lstm::new(&mut ps, "lstm", 3, 4, rng);
    let xid = ps.add("x", Tensor::uniform(&[2, 3], 1.0, rng));
    let hid = ps.add("h", Tensor::uniform(&[2, 4], 1.0, rng));
    let cid = ps.add("c", Tensor::uniform(&[2, 4], 1.0, rng));
    let rh = Tensor::uniform(&[2, 4], 1.0, rng);
    let rc = Tensor::uniform(&[2, 4], 1.0, rng);
    let rep = grad_check(
        |ps| {
            let (x, h, c) = (ps.value(xid).clone(), ps.value(hid).clone(), ps.value(cid).clone());
            let (h1, c1, cache) = lstm.step(ps, &x, &h, &c)?;
            let g = lstm.step_backward(ps, &cache, &rh, &rc)?;
            ps.grad_mut(xid).add_assign(&g.dx)?;
            ps.grad_mut(hid).add_assign(&g.dh)?;
            ps.grad_mut(cid).add_assign(&g.dc)?;
            Ok(dot(&h1, &rh) + dot(&c1, &rc))
        },
        &mut ps,
        1e-4,
        usize::MAX,
        3,
    )
    .unwrap();
    out.push(("lstm", rep.max_rel_error, rep.passed));
    out
}

fn vae_check(rng: &mut ChaCha8Rng) -> (f64, bool) {
    let graph = SkeletonGraph::chain(3).unwrap();
    let cfg = VaeConfig { latent_dim: 4, channels: [4, 6, 6, 8], decoder_channels: 8, ..VaeConfig::default() };
    let mut ps = ParamSet::<f64>::new();
    let net = VaeNet::new(&cfg, &graph, None, &mut ps, 11).unwrap();
    // Zero biases sit exactly on ReLU kinks.
    for id in ps.ids().collect::<Vec<_>>() {
        let jitter = Tensor::<f64>::uniform(ps.value(id).shape(), 0.05, rng);
        ps.value_mut(id).add_assign(&jitter).unwrap();
    }
    let x = Tensor::<f64>::uniform(&[2, 25, 3, 3], 1.0, rng);
    let eps = standard_normal::<f64, _>(&[2, 4], rng);
    let rep = grad_check_piecewise(
        |ps| Ok((net.loss_and_grad(ps, &x, &eps, 1.0, None)?.total, net.piece_fingerprint(ps, &x, &eps)?)),
        &mut ps,
        1e-4,
        800,
        4,
    )
    .unwrap();
    (rep.max_rel_error, rep.passed && rep.skipped * 10 < rep.checked)
}

fn td_check(rng: &mut ChaCha8Rng) -> (f64, bool) {
    let mut ps = ParamSet::<f64>::new();
    let net = QNet::new(&QNetConfig { latent_dim: 4, context_dim: 3, hidden: 5 }, &mut ps, 9).unwrap();
    let mut target = ps.clone();
    for id in target.ids().collect::<Vec<_>>() {
        *target.value_mut(id) = Tensor::uniform(target.value(id).shape(), 0.7, rng);
    }
    let inputs = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n).map(|_| Tensor::<f64>::uniform(&[7], 1.0, rng).data().to_vec()).collect()
    };
    let episode = |n: usize, a: RobotAction, r: f64, rng: &mut ChaCha8Rng| {
        let mut actions = vec![RobotAction::Wait; n - 1];
        actions.push(a);
        EpisodeRecord::new(inputs(n, rng), actions, r).unwrap()
    };
    let a = episode(3, RobotAction::Pick { item: 2, position: 1 }, -1.2, rng);
    let b = episode(2, RobotAction::LiftBox, 3.0, rng);
    let batch = [
        Transition { episode: &a, step: 0 },
        Transition { episode: &a, step: 1 },
        Transition { episode: &a, step: 2 },
        Transition { episode: &b, step: 1 },
    ];
    let rep = grad_check_piecewise(
        |p| Ok((td_loss(&net, p, &target, &batch, 0.9)?, td_piece_fingerprint(&net, p, &batch)?)),
        &mut ps,
        1e-4,
        usize::MAX,
        5,
    )
    .unwrap();
    (rep.max_rel_error, rep.passed && rep.skipped * 10 < rep.checked)
}

#[test]
fn criterion_1_gradient_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut results = layer_checks(&mut rng);
    let (e, ok) = vae_check(&mut rng);
    results.push(("vae loss", e, ok));
    let (e, ok) = td_check(&mut rng);
    results.push(("td loss", e, ok));
    let pass = results.iter().all(|r| r.2 && r.1 < 1e-4) && t.elapsed().as_secs() < 60;
    let detail: Vec<String> = results.iter().map(|(n, e, _)| format!("{n} {e:.1e}")).collect();
    report(1, "gradient correctness", pass, &format!("max rel err: {}", detail.join(", ")), t);
    assert!(pass, "{results:?}");
}

// --- 2: reward table ----------------------------------------------------------

#[test]
fn criterion_2_reward_table() {
    let t = Instant::now();
    let pick = |item, position| RobotAction::Pick { item, position };
    let delivery = PhaseKind::BoxDelivery { box_type: 2, position: 1 };
    let bubble = PhaseKind::BubbleWrap { box_type: 1 };
    let wrap = PhaseKind::WrapUp { box_type: 2 };
    // (phase, action, sign, cap)
    let cases = [
        (delivery, pick(2, 1), 1.0, 4.0),
        (delivery, pick(2, 2), 1.0, 3.5),
        (delivery, pick(1, 1), -1.0, 3.5),
        (delivery, RobotAction::LiftBox, -1.0, 3.5),
        (bubble, pick(1, 2), 1.0, 3.5),
        (bubble, pick(2, 1), -1.0, 3.5),
        (bubble, RobotAction::LiftBox, -1.0, 4.5),
        (wrap, RobotAction::LiftBox, 1.0, 4.5),
        (wrap, pick(2, 1), -1.0, 3.5),
    ];
    let mut failures = Vec::new();
    for (phase, action, sign, cap) in cases {
        for t_b in [0.0, 1.25, cap - 0.5, cap, cap + 0.75, 30.0] {
            let want = sign * f64::min(t_b, cap);
            let got = compute_reward(phase, action, t_b).unwrap();
            if got != want {
                failures.push(format!("{phase:?} {action:?} t_b={t_b}: {got} != {want}"));
            }
        }
    }
    let session = generate_session(&SimConfig::default(), 3).unwrap();
    for phase in &session.script.phases {
        let t_last = phase.t_trigger - 1.0;
        match resolve_decision(phase, t_last, RobotAction::Wait).unwrap() {
            Some(o) if o.reward == 0.0 && o.action == RobotAction::Wait => {}
            other => failures.push(format!("wait at trigger: {other:?}")),
        }
    }
    let pass = failures.is_empty() && t.elapsed().as_secs_f64() < 1.0;
    report(2, "reward table", pass, &format!("9 cases x 6 margins, wait-at-trigger on 6 phases; {} mismatches", failures.len()), t);
    assert!(pass, "{failures:?}");
}

// --- 3: value-iteration oracle ------------------------------------------------

#[test]
fn criterion_3_value_iteration_oracle() {
    let t = Instant::now();
    let mut env = ToyMdp::three_state();
    let mut eval = ToyMdp::three_state();
    let cfg = TrainConfig {
        gamma: 0.9,
        iterations: 60,
        updates_per_iteration: 50,
        batch_size: 64,
        episodes_per_iteration: 30,
        replay_capacity: 5000,
        epsilon_decay_iterations: 30,
        ..TrainConfig::default()
    };
    let qcfg = QNetConfig { latent_dim: env.states(), context_dim: 0, hidden: 16 };
    let trained = train::<f64, _>(&qcfg, &mut env, &mut eval, &cfg, 13).unwrap();
    let q_star = env.value_iteration(0.9, 1e-12);
    let mut max_err: f64 = 0.0;
    let mut same_policy = true;
    for (s, qs) in q_star.iter().enumerate() {
        let q = trained.net.q_forward(&trained.params, &trained.net.zero_state(1), &env.one_hot(s), &[]).unwrap().0;
        same_policy &= pbt_core::btree::argmax_wait_ties(&q) == pbt_core::btree::argmax_wait_ties(qs);
        for a in 0..RobotAction::COUNT {
            max_err = max_err.max((q[a] - qs[a]).abs());
        }
    }
    let pass = same_policy && max_err < 0.05 && t.elapsed().as_secs() < 120;
    report(3, "value-iteration oracle", pass, &format!("policy match {same_policy}, max |Q - Q*| {max_err:.4}"), t);
    assert!(pass);
}

// --- 4: proactivity gain ------------------------------------------------------

#[test]
fn criterion_4_proactivity_gain() {
    let t = Instant::now();
    let mut x = shared();
    let record = x.run_pipeline().unwrap();
    let (mean, sd) = record.evaluation.summary();
    let oracle = record.evaluation.oracle;
    let rows = record.curves.iter().all(|c| c.len() == 100);
    let pass = mean > 1.0 && mean >= 0.6 * oracle && record.evaluation.always_wait == 0.0 && rows;
    let per: Vec<String> = record.evaluation.replicates.iter().map(|r| format!("{:.3}", r.mean_reward())).collect();
    let detail = format!(
        "mean {mean:.3} s (sd {sd:.3}; replicates [{}]), oracle {oracle:.3}, ratio {:.2}, always-wait {}",
        per.join(", "),
        mean / oracle,
        record.evaluation.always_wait
    );
    report(4, "proactivity gain", pass, &detail, t);
    assert!(pass, "{detail}");
}

// --- 5: RL vs baselines -------------------------------------------------------

#[test]
fn criterion_5_rl_vs_baselines() {
    let t = Instant::now();
    let mut x = shared();
    let rep = x.run_benchmark().unwrap();
    let rl = rep.rows.iter().find(|r| r.method == "drqn").unwrap().mean_reward;
    let baselines: Vec<_> = rep.rows.iter().filter(|r| r.tau.is_some()).collect();
    let wait = rep.rows.iter().find(|r| r.method == "always_wait").unwrap();
    let mut pass = baselines.len() == 3 && rep.rows.len() == 5 && wait.mean_reward == 0.0;
    let mut parts = vec![format!("rl {rl:.3}")];
    for b in &baselines {
        let verdict = b.verdict.unwrap();
        pass &= rl >= b.mean_reward && verdict != Verdict::Behind;
        parts.push(format!(
            "{} {:.3} at tau {} (gap {:.3} sd {:.3}, {})",
            b.method,
            b.mean_reward,
            b.tau.unwrap(),
            b.gap_mean.unwrap(),
            b.gap_std.unwrap(),
            verdict.name()
        ));
    }
    let detail = parts.join("; ");
    report(5, "rl vs gated baselines", pass, &detail, t);
    assert!(pass, "{detail}");
}

// --- 6: hyperparameter robustness ---------------------------------------------

#[test]
fn criterion_6_sweep_floor() {
    let t = Instant::now();
    let mut x = shared();
    let cells = x.run_sweep().unwrap();
    let mut pass = cells.len() == 6;
    let mut parts = Vec::new();
    for c in &cells {
        let m = c.finals.iter().sum::<f64>() / c.finals.len() as f64;
        pass &= m > 0.5 && c.finals.len() == 5 && c.curve.len() == 100;
        parts.push(format!("({},{}) {m:.3}", c.latent_dim, c.hidden));
    }
    let detail = format!("final means {}", parts.join(", "));
    report(6, "sweep floor", pass, &detail, t);
    assert!(pass, "{detail}");
}

// --- 7: auxiliary supervision -------------------------------------------------

#[test]
fn criterion_7_aux_null_result() {
    let t = Instant::now();
    let mut x = shared();
    let cmp = x.run_aux_comparison().unwrap();
    let ((um, us), (am, asd)) = cmp.finals();
    let pass = cmp.within_band() && cmp.unsupervised.len() == cmp.auxiliary.len();
    let detail = format!("unsupervised {um:.3} (sd {us:.3}), auxiliary {am:.3} (sd {asd:.3}), band [{:.3}, {:.3}]", um - 2.0 * us, um + 2.0 * us);
    report(7, "aux supervision null result", pass, &detail, t);
    assert!(pass, "{detail}");
}

// --- 8: behavior-tree semantics -------------------------------------------------

struct Scripted(VecDeque<[f64; 6]>);

impl QPolicy for Scripted {
    fn reset(&mut self) {}

    fn q_values(&mut self, _: &Window, _: &BTContext) -> pbt_core::Result<[f64; 6]> {
        Ok(self.0.pop_front().unwrap_or([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
    }
}

#[test]
fn criterion_8_behavior_tree_semantics() {
    let t = Instant::now();
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let cond = |h: &str| Node::Condition(h.to_string());
    let mut reg = Registry::new();
    reg.add_condition("yes", |_| true);
    reg.add_condition("no", |_| false);
    let mut seq = BehaviorTree::new(&Node::Sequence(vec![cond("no"), cond("yes")])).unwrap();
    let status = seq.tick(&mut Blackboard::default(), &mut reg);
    checks.push(("sequence short-circuits", status == NodeStatus::Failure && seq.tick_count(seq.children(seq.root())[1]) == 0));
    let mut fb = BehaviorTree::new(&Node::Fallback(vec![cond("yes"), cond("no")])).unwrap();
    let status = fb.tick(&mut Blackboard::default(), &mut reg);
    checks.push(("fallback short-circuits", status == NodeStatus::Success && fb.tick_count(fb.children(fb.root())[1]) == 0));
    let mut fb = BehaviorTree::new(&Node::Fallback(vec![cond("no"), cond("yes")])).unwrap();
    checks.push(("fallback falls through", fb.tick(&mut Blackboard::default(), &mut reg) == NodeStatus::Success));

    // Four ticks: Wait best, tie at zero, correct action valued 3, completion.
    let session = generate_session(&SimConfig::default(), 17).unwrap();
    let correct = session.script.phases[0].kind.correct_action();
    let mut act = [0.0; 6];
    act[correct.index()] = 3.0;
    let mut reg = Registry::new();
    reg.add_policy("q", Box::new(Scripted(VecDeque::from([[0.5, 0.1, 0.1, 0.1, 0.1, 0.1], [0.0, -0.5, -0.5, -0.5, -0.5, -0.5], act]))));
    let mut tree = BehaviorTree::new(&build_packaging_tree("q")).unwrap();
    let run = run_phase(&mut tree, &mut reg, &session, 0).unwrap();
    let q = tree.find(NodeKind::QValue, "q").unwrap();
    checks.push((
        "four-tick trace",
        run.statuses == [NodeStatus::Failure, NodeStatus::Failure, NodeStatus::Running, NodeStatus::Success]
            && run.outcome.action == correct
            && run.outcome.action_time == 3.0
            && run.outcome.reward == 4.0
            && run.reactive.is_none()
            && tree.tick_count(q) == 4,
    ));

    let mut reg = Registry::new();
    let mut total = 0.0;
    let mut reactive_ok = true;
    for seed in 0..5 {
        let s = generate_session(&SimConfig::default(), seed).unwrap();
        for node in [reactive_plan(), build_packaging_tree("disabled")] {
            let mut tree = BehaviorTree::new(&node).unwrap();
            for (r, p) in run_session(&mut tree, &mut reg, &s).unwrap().iter().zip(&s.script.phases) {
                total += r.outcome.reward;
                reactive_ok &= r.reactive == Some(p.kind.correct_action());
            }
        }
    }
    checks.push(("disabled q-node returns exactly 0", total == 0.0 && reactive_ok));

    let pass = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks.iter().map(|(n, ok)| format!("{n}: {ok}")).collect();
    report(8, "behavior-tree semantics", pass, &detail.join(", "), t);
    assert!(pass, "{checks:?}");
}

// --- 9: determinism -------------------------------------------------------------

const TINY: &str = "
data.sessions = 6
data.eval_sessions = 3
vae.latent_dim = 4
vae.channels = 4, 6, 6, 8
vae.decoder_channels = 8
vae.epochs = 1
qnet.hidden = 8
drqn.iterations = 4
drqn.updates_per_iteration = 5
drqn.batch_size = 16
drqn.episodes_per_iteration = 12
drqn.epsilon_decay_iterations = 2
run.replicates = 2
sweep.latent_dims = 4, 6
sweep.hidden_sizes = 8
baselines.channels = 4, 6, 6, 8
baselines.feature_dim = 4
baselines.hidden = 8
baselines.epochs = 1
baselines.bootstrap_models = 2
baselines.dropout_passes = 3
";

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn tiny(dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig { out_dir: dir, ..ExperimentConfig::parse(TINY).unwrap() }
}

fn run_everything(dir: PathBuf) -> Vec<(String, Vec<u8>)> {
    let mut x = Experiment::<f32>::new(tiny(dir.clone())).unwrap();
    x.run_pipeline().unwrap();
    x.run_benchmark().unwrap();
    x.run_sweep().unwrap();
    x.run_aux_comparison().unwrap();
    csv_files(&dir)
}

#[test]
fn criterion_9_determinism() {
    let t = Instant::now();
    let a = run_everything(scratch("determinism-a"));
    let b = run_everything(scratch("determinism-b"));
    let identical = a == b && a.len() == 12;

    // Each stage in a fresh process-like experiment, chained through checkpoints.
    let dir = scratch("determinism-staged");
    let fresh = || {
        let mut x = Experiment::<f32>::new(tiny(dir.clone())).unwrap();
        x.load_checkpoints().unwrap();
        x
    };
    fresh().gen_data().unwrap();
    fresh().train_vae().unwrap();
    fresh().train_drqn().unwrap();
    fresh().evaluate().unwrap();
    fresh().run_benchmark().unwrap();
    let staged = csv_files(&dir);
    let staged_match = staged.len() == 8 && staged.iter().all(|(name, bytes)| a.iter().any(|(n, b)| n == name && b == bytes));

    let pass = identical && staged_match;
    report(
        9,
        "determinism",
        pass,
        &format!("{} CSVs byte-identical across reruns: {identical}; stage-by-stage run matches: {staged_match}", a.len()),
        t,
    );
    assert!(pass);
}

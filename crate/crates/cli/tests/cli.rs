use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
data.sessions = 4
data.eval_sessions = 2
vae.latent_dim = 4
vae.channels = 4, 6, 6, 8
vae.decoder_channels = 8
vae.epochs = 1
qnet.hidden = 8
drqn.iterations = 3
drqn.updates_per_iteration = 4
drqn.batch_size = 8
drqn.episodes_per_iteration = 8
drqn.epsilon_decay_iterations = 2
run.replicates = 2
";

fn pbt(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pbt"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn gen_data_writes_sessions_with_preamble() {
    let dir = tempfile::tempdir().unwrap();
    let out = pbt(dir.path(), &["gen-data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/sessions.csv")).unwrap();
    assert!(text.starts_with("# config_hash = "));
    assert!(text.contains("# data.sessions = 4\n"));
    assert!(text.contains("split,session,seed,phase,kind,box_type,position,cue_onset,t_trigger\n"));
    assert!(dir.path().join("out/config.txt").exists());
    assert!(dir.path().join("out/runs.log").exists());
}

#[test]
fn seed_override_is_refused_in_a_foreign_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    assert!(pbt(dir.path(), &["gen-data"]).status.success());
    let out = pbt(dir.path(), &["--seed", "9", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn unknown_config_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no.such.key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pbt")).arg("--config").arg(&cfg).arg("gen-data").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no.such.key"));
}

#[test]
fn precision_flag_rejects_other_widths() {
    let dir = tempfile::tempdir().unwrap();
    let out = pbt(dir.path(), &["--precision", "16", "gen-data"]);
    assert!(!out.status.success());
}

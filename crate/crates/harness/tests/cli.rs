use std::path::Path;
use std::process::{Command, Output};

fn rowgossip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rowgossip"))
        .args(args)
        .env_remove("ROWGOSSIP_SEED")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn metrics_subcommand() {
    let out = rowgossip(&["metrics", "--topology", "exp", "--n", "8"]);
    assert!(out.status.success());
    let v = json(&out);
    for key in ["n", "beta", "kappa", "theta", "m_a", "s_a", "perron_residual", "k_max"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!((v["beta"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(v["kappa"].as_f64().unwrap(), 1.0);
}

#[test]
fn metrics_from_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    std::fs::write(&path, "2\n0.5,0.5\n0.25,0.75\n").unwrap();
    let out = rowgossip(&["metrics", "--matrix", path.to_str().unwrap()]);
    assert!(out.status.success());
    // π = (1/3, 2/3).
    assert!((json(&out)["kappa"].as_f64().unwrap() - 2.0).abs() < 1e-9);

    std::fs::write(&path, "2\n0.5,0.6\n0.25,0.75\n").unwrap();
    assert_eq!(rowgossip(&["metrics", "--matrix", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_fails() {
    assert_eq!(rowgossip(&["verify"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "2\n0.5,0.6\n0.5,0.5\n").unwrap();
    let out = rowgossip(&["verify", "--matrix", path.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert_eq!(report["passed"], false);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[topology]\nkind = \"torus\"\n").unwrap();
    assert_eq!(rowgossip(&["consensus", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(rowgossip(&["consensus", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(rowgossip(&["speedup", "--repetitions", "0"]).status.code(), Some(2));
    assert_eq!(rowgossip(&["mg-compare", "--R", "1,0"]).status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("floor.toml");
    std::fs::write(&path, "[tolerances]\ndiag_floor = 0.6\n[problem]\ntotal_samples = 1600\nbatch = 10\n").unwrap();
    let out = rowgossip(&[
        "mg-compare", "--config", path.to_str().unwrap(), "--topology", "ring", "--n", "16", "--R", "1", "--alpha", "0.005",
        "--rounds", "200",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

fn consensus_csv(dir: &Path, extra: &[(&str, &str)]) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rowgossip"));
    cmd.args(["consensus", "--n", "8", "--output", dir.to_str().unwrap()]);
    cmd.env_remove("ROWGOSSIP_SEED");
    for (k, v) in extra {
        cmd.env(k, v);
    }
    assert!(cmd.output().unwrap().status.success());
    std::fs::read_to_string(dir.join("consensus_beta_mix_1.csv")).unwrap()
}

#[test]
fn seed_env_sets_default_seed() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = consensus_csv(dirs[0].path(), &[("ROWGOSSIP_SEED", "9")]);
    let b = consensus_csv(dirs[1].path(), &[("ROWGOSSIP_SEED", "9")]);
    let c = consensus_csv(dirs[2].path(), &[]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[topology]\nkind = \"ring\"\nn = 5\n[consensus]\nrounds = 12\n").unwrap();
    let out = rowgossip(&["consensus", "--config", cfg.to_str().unwrap(), "--n", "7"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["n"], 7);
    assert_eq!(v["rounds"], 12);
}

#[test]
fn speedup_writes_one_csv_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = rowgossip(&[
        "speedup", "--nodes", "1,4", "--sigma", "1.0", "--rounds", "200", "--output", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for f in ["speedup_n1.csv", "speedup_n4.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("speedup_n4.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "comm_rounds,samples,grad_norm,consensus_err,descent_dev,objective");
}

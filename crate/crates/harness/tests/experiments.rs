use nalgebra::DMatrix;
use rowgossip::config::{ExperimentConfig, ExperimentKind, ProblemKind, Rounds, TopologyKind};
use rowgossip::experiments::{log_slope, mean_se, plateau, run_metrics, sweep_matrices, MgEntry};
use rowgossip::record::{average_rows, CSV_HEADER};
use rowgossip::suite::default_cases;
use rowgossip::{
    run_consensus_experiment, run_experiment, run_invariant_suite, run_mg_compare, run_speedup_experiment, Row,
    SuiteCase,
};
use rowgossip_core::optim::{run, Algorithm, Network, RunSpec};
use rowgossip_core::problems::{noisy, LogisticConfig};
use rowgossip_core::rng::derive_seed;
use rowgossip_core::spectral::compute_metrics;
use rowgossip_core::topology::{build_exponential, weights_from_indegree};
use rowgossip_core::Tolerances;

fn consensus_cfg(n: usize, rounds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.kind = ExperimentKind::Consensus;
    cfg.topology.n = n;
    cfg.consensus.rounds = rounds;
    cfg.run.seed = Some(5);
    cfg
}

fn small_logistic(cfg: &mut ExperimentConfig) {
    cfg.problem.total_samples = 1600;
    cfg.problem.batch = 10;
}

fn row(k: usize, g: f64) -> Row {
    Row { comm_rounds: k, samples: k, grad_norm: Some(g), consensus_err: 0.0, descent_dev: Some(0.0), objective: None }
}

#[test]
fn consensus_decays_geometrically_on_exponential_graph() {
    let out = run_consensus_experiment(&consensus_cfg(8, 30)).unwrap();
    let base = out.records.iter().find(|r| r.name == "consensus_beta_mix_1").unwrap();
    let beta = compute_metrics(&weights_from_indegree(&build_exponential(8).unwrap()).unwrap(), None, &Tolerances::default())
        .unwrap()
        .beta;
    let initial = base.rows[0].consensus_err;
    let last = base.rows.last().unwrap();
    assert_eq!(last.comm_rounds, 30);
    assert!(last.consensus_err <= beta.powi(25) * initial, "{} vs {}", last.consensus_err, beta.powi(25) * initial);
}

#[test]
fn consensus_sweep_reports_monotone_trends() {
    let out = run_consensus_experiment(&consensus_cfg(8, 40)).unwrap();
    let matrices = out.summary["matrices"].as_array().unwrap();
    let pick = |family: &str, key: &str| -> Vec<f64> {
        matrices.iter().filter(|m| m["family"] == family).map(|m| m[key].as_f64().unwrap()).collect()
    };
    // Shrinking θ lowers β with κ = 1; growing η raises κ.
    let betas = pick("beta_mix", "beta");
    assert!(betas.windows(2).all(|w| w[1] < w[0]), "{betas:?}");
    assert!(pick("beta_mix", "kappa").iter().all(|k| (k - 1.0).abs() < 1e-9));
    let kappas = pick("kappa_mix", "kappa");
    assert!(kappas.windows(2).all(|w| w[1] > w[0]), "{kappas:?}");
    let slopes = pick("beta_mix", "log_slope");
    assert!(slopes.windows(2).all(|w| w[1] < w[0]), "{slopes:?}");
    for (s, b) in slopes.iter().zip(&betas) {
        assert!((s - b.ln()).abs() < 0.05, "slope {s} vs ln beta {}", b.ln());
    }
}

#[test]
fn consensus_single_node_is_exact() {
    let out = run_consensus_experiment(&consensus_cfg(1, 10)).unwrap();
    for r in &out.records {
        assert!(r.rows.iter().all(|row| row.consensus_err == 0.0));
    }
}

#[test]
fn consensus_csv_is_reproducible() {
    let a = run_consensus_experiment(&consensus_cfg(8, 20)).unwrap();
    let b = run_consensus_experiment(&consensus_cfg(8, 20)).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.to_csv(), y.to_csv());
        assert!(x.to_csv().starts_with(CSV_HEADER));
    }
}

#[test]
fn sweep_families_are_row_stochastic() {
    let base = weights_from_indegree(&build_exponential(6).unwrap()).unwrap();
    let cfg = ExperimentConfig::default();
    let all = sweep_matrices(&base, &cfg.consensus).unwrap();
    assert_eq!(all.len(), cfg.consensus.beta_mix.len() + cfg.consensus.kappa_mix.len());
    // θ = 1 returns the base matrix.
    assert_eq!(all[0].2.entries(), base.entries());
}

#[test]
fn speedup_single_node_is_plain_sgd() {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.kind = ExperimentKind::Speedup;
    small_logistic(&mut cfg);
    cfg.run.nodes = vec![1];
    cfg.run.repetitions = 2;
    cfg.run.seed = Some(1);
    cfg.algorithm.comm_budget = 300;
    cfg.algorithm.log_rounds = 1;
    let out = run_speedup_experiment(&cfg).unwrap();
    assert_eq!(out.records.len(), 1);

    // Same runs done by hand, averaged.
    let net = Network::new(cfg.topology.build_with(1).unwrap()).unwrap();
    let runs: Vec<Vec<Row>> = (0..2)
        .map(|rep| {
            let seed = derive_seed(1, rep);
            let oracle = cfg.problem.build(1, seed).unwrap();
            let reps = run(&RunSpec::new(Algorithm::PullDiagGt, 0.512, 300, seed), &net, oracle.as_ref()).unwrap();
            reps.iter().map(Row::from).collect()
        })
        .collect();
    assert_eq!(out.records[0].rows, average_rows(&runs));
    assert!(out.records[0].rows.iter().all(|r| r.consensus_err == 0.0));
}

#[test]
fn speedup_rejects_uneven_split() {
    let mut cfg = ExperimentConfig::default();
    cfg.run.nodes = vec![1, 7];
    let err = run_speedup_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn speedup_orders_plateaus() {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.kind = ExperimentKind::Speedup;
    cfg.run.nodes = vec![1, 16];
    cfg.run.repetitions = 4;
    cfg.run.seed = Some(2);
    cfg.algorithm.comm_budget = 2000;
    cfg.algorithm.log_rounds = 10;
    let out = run_speedup_experiment(&cfg).unwrap();
    let p: Vec<f64> = out.summary["entries"].as_array().unwrap().iter().map(|e| e["plateau_mean"].as_f64().unwrap()).collect();
    assert!(p[1] < 0.5 * p[0], "{p:?}");
}

fn mg_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.kind = ExperimentKind::MgCompare;
    cfg.topology.kind = TopologyKind::Ring;
    cfg.topology.n = 16;
    small_logistic(&mut cfg);
    cfg.algorithm.rounds = vec![Rounds::Fixed(1), Rounds::Fixed(5), Rounds::Auto];
    cfg.algorithm.alphas = Some(vec![0.005, 0.01, 0.02]);
    cfg.algorithm.comm_budget = 2400;
    cfg.run.repetitions = 2;
    cfg.run.seed = Some(4);
    cfg
}

#[test]
fn mg_compare_vanilla_entry_matches_direct_run() {
    let cfg = mg_cfg();
    let out = run_mg_compare(&cfg).unwrap();
    let net = Network::new(cfg.topology.build().unwrap()).unwrap();
    let seed = derive_seed(4, 0);
    let oracle = cfg.problem.build(16, seed).unwrap();
    let mut spec = RunSpec::new(Algorithm::PullDiagGt, 0.005, 2400, seed);
    spec.log_every = cfg.algorithm.log_spacing();
    let direct = run(&spec, &net, oracle.as_ref()).unwrap();
    let entries: Vec<MgEntry> = serde_json::from_value(out.summary["entries"].clone()).unwrap();
    assert_eq!(entries[0].final_objectives[0], direct.last().unwrap().centroid_f);
}

#[test]
fn mg_compare_counts_are_consistent() {
    let out = run_mg_compare(&mg_cfg()).unwrap();
    assert!(out.failures.is_empty());
    let r_auto = out.summary["recommended_r"].as_u64().unwrap() as usize;
    for (rec, r) in out.records.iter().zip([1, 5, r_auto]) {
        assert!(!rec.rows.is_empty());
        assert!(rec.rows.windows(2).all(|w| w[0].comm_rounds < w[1].comm_rounds));
        for row in &rec.rows {
            assert_eq!(row.comm_rounds % r, 0);
            assert_eq!(row.samples, row.comm_rounds);
        }
        assert_eq!(rec.rows.last().unwrap().comm_rounds, (2400 / r) * r);
    }
    let (name, table) = &out.tables[0];
    assert_eq!(name, "mg_compare.csv");
    assert!(table.starts_with("comm_rounds,mg_R1,mg_R5,mg_Rauto\n"));
    // The auto entry never trips the diagonal floor.
    let entries: Vec<MgEntry> = serde_json::from_value(out.summary["entries"].clone()).unwrap();
    assert!(entries[2].final_objectives.iter().all(Option::is_some));
}

#[test]
fn mg_compare_rejects_short_budget() {
    let mut cfg = mg_cfg();
    cfg.algorithm.comm_budget = 100;
    assert_eq!(run_mg_compare(&cfg).unwrap_err().exit_code(), 2);
}

#[test]
fn numerical_failures_are_reported() {
    let mut cfg = mg_cfg();
    cfg.algorithm.rounds = vec![Rounds::Fixed(1)];
    cfg.algorithm.alphas = None;
    cfg.algorithm.alpha = Some(0.005);
    // A floor above every early diagonal forces the small-diagonal error.
    cfg.tolerances.diag_floor = Some(0.6);
    let out = run_mg_compare(&cfg).unwrap();
    assert_eq!(out.failures.len(), 2);
    assert_eq!(out.failure().unwrap().exit_code(), 3);
}

#[test]
fn records_regenerate_from_echoed_config() {
    let mut cfg = mg_cfg();
    cfg.algorithm.rounds = vec![Rounds::Fixed(3)];
    cfg.algorithm.alphas = None;
    cfg.algorithm.alpha = Some(0.01);
    let first = run_experiment(&cfg).unwrap();
    let echoed: ExperimentConfig = serde_json::from_value(first.records[0].config.clone()).unwrap();
    let second = run_experiment(&echoed).unwrap();
    assert_eq!(first.records[0].to_csv(), second.records[0].to_csv());
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mg_cfg();
    cfg.algorithm.rounds = vec![Rounds::Fixed(1), Rounds::Auto];
    cfg.algorithm.alphas = Some(vec![0.005, 0.02]);
    cfg.run.repetitions = 1;
    run_mg_compare(&cfg).unwrap().write(dir.path()).unwrap();
    for f in ["mg_R1.csv", "mg_R1.json", "mg_Rauto.csv", "mg_compare.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mg_R1.json")).unwrap()).unwrap();
    assert!(json["summary"]["final_objective"].is_f64());
    assert_eq!(json["config"]["run"]["seed"], 4);
}

#[test]
fn problem_kinds_build() {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.dim = 4;
    cfg.problem.total_samples = 600;
    for kind in [ProblemKind::Logistic, ProblemKind::Quadratic, ProblemKind::Hard] {
        cfg.problem.kind = kind;
        let oracle = cfg.problem.build(6, 0).unwrap();
        assert_eq!((oracle.nodes(), oracle.dim()), (6, 4));
    }
    cfg.problem.kind = ProblemKind::Hard;
    assert!(cfg.problem.build(4, 0).is_err());
}

#[test]
fn helper_statistics() {
    let rows: Vec<Row> = (0..20).map(|k| row(k, k as f64)).collect();
    assert_eq!(plateau(&rows), Some(18.5));
    assert_eq!(plateau(&rows[..3]), Some(2.0));
    assert_eq!(plateau(&[]), None);
    let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
    assert_eq!(m, 2.0);
    assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    let pts: Vec<(usize, f64)> = (0..10).map(|k| (k, 3.0 * 0.5f64.powi(k as i32))).collect();
    assert!((log_slope(&pts).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    assert_eq!(log_slope(&[(0, 1.0), (1, 0.0)]), None);
}

#[test]
fn metrics_report_fields() {
    let a = weights_from_indegree(&build_exponential(8).unwrap()).unwrap();
    let m = run_metrics(&a, None, &Tolerances::default()).unwrap();
    assert!((m.beta - 0.5).abs() < 1e-6);
    assert_eq!(m.n, 8);
    assert!(m.k_max >= 9);
}

#[test]
fn invariant_suite_default_set_passes() {
    let report = run_invariant_suite(&default_cases().unwrap(), &Tolerances::default());
    assert!(report.passed, "{:?}", report.failed_cases());
    assert_eq!(report.cases.len(), 8);
    for case in &report.cases {
        assert!(case.checks.iter().all(|c| c.ratio <= 1.0 + 1e-8), "{}", case.name);
    }
}

#[test]
fn invariant_suite_flags_corrupted_matrix() {
    let mut entries = DMatrix::from_element(3, 3, 1.0 / 3.0);
    entries[(1, 2)] += 0.1;
    let report = run_invariant_suite(&[SuiteCase::new("corrupted", entries)], &Tolerances::default());
    assert!(!report.passed);
    assert_eq!(report.failed_cases(), vec!["corrupted"]);
    assert!(report.cases[0].checks[0].detail.as_ref().unwrap().contains("1.1"));
}

#[test]
fn invariant_suite_single_node_has_zero_deviations() {
    let cases = default_cases().unwrap();
    let single = cases.into_iter().find(|c| c.name == "single").unwrap();
    let report = run_invariant_suite(&[single], &Tolerances::default());
    assert!(report.passed);
    for c in &report.cases[0].checks {
        match c.name.as_str() {
            "diag_floor" => assert_eq!(c.ratio, 0.5),
            // Rounding in the optimizer iterates, far below tolerance.
            "probes_gt" | "probes_mg" => assert!(c.ratio < 1e-6, "{}", c.ratio),
            _ => assert_eq!(c.ratio, 0.0, "{}", c.name),
        }
    }
}

#[test]
fn noisy_logistic_runs_with_probes() {
    let net = Network::new(weights_from_indegree(&build_exponential(4).unwrap()).unwrap()).unwrap();
    let oracle = noisy(LogisticConfig { total_samples: 400, batch: 5, ..LogisticConfig::default() }.build(4, 0).unwrap(), 0.5);
    let mut spec = RunSpec::new(Algorithm::MgPullDiagGt { rounds: 2 }, 0.05, 200, 0);
    spec.probes = true;
    assert_eq!(run(&spec, &net, &oracle).unwrap().len(), 100);
}

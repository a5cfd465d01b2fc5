//! Experiment drivers.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rowgossip_core::gossip::{consensus_error, interleaved_trajectory};
use rowgossip_core::optim::{recommended_r, run, Algorithm, Network, RunFailure, RunSpec};
use rowgossip_core::rng::{derive_seed, seeded};
use rowgossip_core::spectral::compute_metrics;
use rowgossip_core::{Error, MixingMatrix, StackedState, Tolerances};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ConsensusSpec, ExperimentConfig, ExperimentKind, ProblemKind, Rounds};
use crate::error::{HarnessError, HarnessResult};
use crate::record::{average_rows, to_json, Row, RunRecord};
use crate::suite::{default_cases, run_invariant_suite};

/// A run that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedRun {
    pub label: String,
    pub seed: u64,
    pub error: String,
    #[serde(skip)]
    pub cause: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    /// Additional CSV files as `(file name, contents)`.
    pub tables: Vec<(String, String)>,
    pub summary: Value,
    pub failures: Vec<FailedRun>,
}

impl ExperimentOutput {
    fn summary_only(summary: Value) -> Self {
        Self { records: Vec::new(), tables: Vec::new(), summary, failures: Vec::new() }
    }

    pub fn write(&self, dir: &Path) -> HarnessResult<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.records {
            r.write(dir)?;
        }
        for (name, text) in &self.tables {
            std::fs::write(dir.join(name), text)?;
        }
        std::fs::write(dir.join("summary.json"), to_json(&self.summary))?;
        Ok(())
    }

    /// Error describing the first failed run, if any: numerical failures
    /// take precedence over invariant violations.
    pub fn failure(&self) -> Option<HarnessError> {
        let pick = self
            .failures
            .iter()
            .find(|f| f.cause.is_numerical())
            .or_else(|| self.failures.first())?;
        Some(HarnessError::Core(pick.cause.clone()))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> HarnessResult<ExperimentOutput> {
    cfg.validate()?;
    match cfg.experiment.kind {
        ExperimentKind::Metrics => {
            let a = cfg.topology.build()?;
            let report = run_metrics(&a, None, &cfg.tolerances.resolve())?;
            Ok(ExperimentOutput::summary_only(serde_json::to_value(report).expect("serializable")))
        }
        ExperimentKind::Consensus => run_consensus_experiment(cfg),
        ExperimentKind::Speedup => run_speedup_experiment(cfg),
        ExperimentKind::MgCompare => run_mg_compare(cfg),
        ExperimentKind::Invariants => {
            let report = run_invariant_suite(&default_cases()?, &cfg.tolerances.resolve());
            let failures = if report.passed {
                Vec::new()
            } else {
                let cause = Error::InvariantViolation(format!("{} case(s) failed", report.failed_cases().len()));
                vec![FailedRun { label: "suite".into(), seed: 0, error: cause.to_string(), cause }]
            };
            let mut out = ExperimentOutput::summary_only(serde_json::to_value(&report).expect("serializable"));
            out.failures = failures;
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub beta: f64,
    pub kappa: f64,
    pub theta: f64,
    pub m_a: f64,
    pub s_a: f64,
    pub perron_residual: f64,
    pub k_max: usize,
}

pub fn run_metrics(a: &MixingMatrix, k_max: Option<usize>, tol: &Tolerances) -> HarnessResult<MetricsReport> {
    let m = compute_metrics(a, k_max, tol)?;
    Ok(MetricsReport {
        n: m.n,
        beta: m.beta,
        kappa: m.kappa,
        theta: m.theta,
        m_a: m.m_a,
        s_a: m.s_a,
        perron_residual: m.perron_residual,
        k_max: m.horizon,
    })
}

/// The swept matrices, labelled by family and parameter.
pub fn sweep_matrices(base: &MixingMatrix, spec: &ConsensusSpec) -> HarnessResult<Vec<(String, f64, MixingMatrix)>> {
    let n = base.n();
    let a = base.entries();
    let uniform = DMatrix::from_element(n, n, 1.0 / n as f64);
    let total = (n * (n + 1) / 2) as f64;
    let skewed = DMatrix::from_fn(n, n, |_, j| (j + 1) as f64 / total);
    let mut out = Vec::new();
    for &theta in &spec.beta_mix {
        let m = a * theta + &uniform * (1.0 - theta);
        out.push(("beta_mix".to_string(), theta, MixingMatrix::new(m)?));
    }
    for &eta in &spec.kappa_mix {
        let m = a * (1.0 - eta) + &skewed * eta;
        out.push(("kappa_mix".to_string(), eta, MixingMatrix::new(m)?));
    }
    Ok(out)
}

/// Least-squares slope of `ln err` against `k`; None if any error is zero.
pub fn log_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|p| !(p.1 > 0.0)) {
        return None;
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let num: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1.ln() - my)).sum();
    let den: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    Some(num / den)
}

pub fn run_consensus_experiment(cfg: &ExperimentConfig) -> HarnessResult<ExperimentOutput> {
    let tol = cfg.tolerances.resolve();
    let base = cfg.topology.build()?;
    let n = base.n();
    let k = cfg.consensus.rounds;
    let mut rng = seeded(cfg.base_seed()?);
    let z = StackedState::new(DMatrix::from_fn(n, cfg.consensus.dim.max(1), |_, _| StandardNormal.sample(&mut rng)))?;
    let target = z.mean();
    let initial = consensus_error(&z, &target)?;
    let echo = config_echo(cfg);
    let mut records = Vec::new();
    let mut rows_summary = Vec::new();
    for (family, param, a) in sweep_matrices(&base, &cfg.consensus)? {
        let start = Instant::now();
        let metrics = compute_metrics(&a, None, &tol)?;
        let traj = interleaved_trajectory(&a, &z, k)?;
        let mut rows = vec![consensus_row(0, initial)];
        for (i, state) in traj.iter().enumerate() {
            rows.push(consensus_row(i + 1, consensus_error(state, &target)?));
        }
        // Fit only above the rounding floor.
        let tail: Vec<(usize, f64)> = rows
            .iter()
            .skip(5.min(k))
            .filter(|r| r.consensus_err > 1e-12 * initial)
            .map(|r| (r.comm_rounds, r.consensus_err))
            .collect();
        let slope = log_slope(&tail);
        let mut record = RunRecord::new(format!("consensus_{family}_{param}"), echo.clone(), rows, start.elapsed().as_secs_f64());
        let extra = json!({
            "family": family,
            "parameter": param,
            "beta": metrics.beta,
            "kappa": metrics.kappa,
            "initial_error": initial,
            "log_slope": slope,
            "ln_beta": metrics.beta.ln(),
        });
        rows_summary.push(extra.clone());
        if let Value::Object(map) = extra {
            record.summary.extra = map;
        }
        records.push(record);
    }
    let summary = json!({ "kind": "consensus", "n": n, "rounds": k, "matrices": rows_summary });
    Ok(ExperimentOutput { records, tables: Vec::new(), summary, failures: Vec::new() })
}

fn consensus_row(k: usize, err: f64) -> Row {
    Row { comm_rounds: k, samples: 0, grad_norm: None, consensus_err: err, descent_dev: None, objective: None }
}

/// Mean of `grad_norm` over the last 10% of rows (at least one row).
pub fn plateau(rows: &[Row]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let take = (rows.len() / 10).max(1);
    let tail = &rows[rows.len() - take..];
    let sum: Option<f64> = tail.iter().map(|r| r.grad_norm).sum();
    sum.map(|s| s / take as f64)
}

/// Sample mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupEntry {
    pub n: usize,
    pub alpha: f64,
    pub plateau_mean: f64,
    pub plateau_se: f64,
    pub plateaus: Vec<f64>,
}

struct SeedRun {
    seed: u64,
    outcome: Result<Vec<Row>, RunFailure>,
}

fn run_seeds(
    cfg: &ExperimentConfig,
    net: &Network,
    algorithm: Algorithm,
    alpha: f64,
    log_every: usize,
) -> HarnessResult<Vec<SeedRun>> {
    let base = cfg.base_seed()?;
    let n = net.n();
    (0..cfg.run.repetitions as u64)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(base, rep);
            let oracle = cfg.problem.build(n, seed)?;
            let mut spec = RunSpec::new(algorithm, alpha, cfg.algorithm.comm_budget, seed);
            spec.probes = cfg.algorithm.probes;
            spec.log_every = log_every;
            let outcome = run(&spec, net, oracle.as_ref()).map(|reps| reps.iter().map(Row::from).collect());
            Ok(SeedRun { seed, outcome })
        })
        .collect()
}

fn split_runs(label: &str, runs: Vec<SeedRun>, failures: &mut Vec<FailedRun>) -> Vec<(u64, Vec<Row>)> {
    let mut ok = Vec::new();
    for r in runs {
        match r.outcome {
            Ok(rows) => ok.push((r.seed, rows)),
            Err(f) => failures.push(FailedRun { label: label.to_string(), seed: r.seed, error: f.error.to_string(), cause: f.error }),
        }
    }
    ok
}

pub fn run_speedup_experiment(cfg: &ExperimentConfig) -> HarnessResult<ExperimentOutput> {
    let tol = cfg.tolerances.resolve();
    if cfg.problem.kind == ProblemKind::Logistic {
        if let Some(n) = cfg.run.nodes.iter().find(|&&n| cfg.problem.total_samples % n != 0) {
            return Err(HarnessError::Config(format!(
                "{} samples cannot be split evenly over {n} nodes",
                cfg.problem.total_samples
            )));
        }
    }
    let echo = config_echo(cfg);
    let mut records = Vec::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.run.nodes {
        let start = Instant::now();
        let net = Network::with_tolerances(cfg.topology.build_with(n)?, tol)?;
        let alpha = cfg.algorithm.step_size(n)?;
        let label = format!("speedup_n{n}");
        let runs = run_seeds(cfg, &net, Algorithm::PullDiagGt, alpha, cfg.algorithm.log_spacing())?;
        let ok = split_runs(&label, runs, &mut failures);
        let plateaus: Vec<f64> = ok.iter().filter_map(|(_, rows)| plateau(rows)).collect();
        let all: Vec<Vec<Row>> = ok.into_iter().map(|(_, rows)| rows).collect();
        let (plateau_mean, plateau_se) = if plateaus.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&plateaus) };
        let entry = SpeedupEntry { n, alpha, plateau_mean, plateau_se, plateaus };
        let mut record = RunRecord::new(label, echo.clone(), average_rows(&all), start.elapsed().as_secs_f64());
        if let Value::Object(map) = serde_json::to_value(&entry).expect("serializable") {
            record.summary.extra = map;
        }
        records.push(record);
        entries.push(entry);
    }
    let summary = json!({ "kind": "speedup", "entries": entries, "failures": failures });
    Ok(ExperimentOutput { records, tables: Vec::new(), summary, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgEntry {
    pub label: String,
    pub rounds: usize,
    pub auto: bool,
    pub alpha: f64,
    pub iterations: usize,
    /// Final objective per repetition; None where the run failed.
    pub final_objectives: Vec<Option<f64>>,
}

/// Resolves `auto` to the recommended R of `a`.
pub fn resolve_rounds(list: &[Rounds], recommended: usize) -> Vec<usize> {
    list.iter()
        .map(|r| match r {
            Rounds::Fixed(r) => *r,
            Rounds::Auto => recommended,
        })
        .collect()
}

pub fn run_mg_compare(cfg: &ExperimentConfig) -> HarnessResult<ExperimentOutput> {
    let tol = cfg.tolerances.resolve();
    let a = cfg.topology.build()?;
    let n = a.n();
    let metrics = compute_metrics(&a, None, &tol)?;
    let recommended = recommended_r(&metrics);
    let rounds = resolve_rounds(&cfg.algorithm.rounds, recommended);
    let budget = cfg.algorithm.comm_budget;
    let max_r = rounds.iter().copied().max().unwrap_or(1);
    if budget < max_r {
        return Err(HarnessError::Config(format!("comm_budget {budget} is below the largest R = {max_r}")));
    }
    let net = Network::with_tolerances(a, tol)?;
    let spacing = cfg.algorithm.log_spacing();
    let echo = config_echo(cfg);
    let mut records = Vec::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (idx, (&r, spec_r)) in rounds.iter().zip(&cfg.algorithm.rounds).enumerate() {
        let start = Instant::now();
        let alpha = cfg.algorithm.step_size_for(idx, n)?;
        let algorithm = if r == 1 { Algorithm::PullDiagGt } else { Algorithm::MgPullDiagGt { rounds: r } };
        let label = format!("R{spec_r}");
        let runs = run_seeds(cfg, &net, algorithm, alpha, (spacing / r).max(1))?;
        let final_objectives = runs
            .iter()
            .map(|s| s.outcome.as_ref().ok().and_then(|rows| rows.last()).and_then(|row| row.objective))
            .collect();
        let ok = split_runs(&label, runs, &mut failures);
        let all: Vec<Vec<Row>> = ok.into_iter().map(|(_, rows)| rows).collect();
        let entry = MgEntry { label: label.clone(), rounds: r, auto: *spec_r == Rounds::Auto, alpha, iterations: budget / r, final_objectives };
        let mut record = RunRecord::new(format!("mg_{label}"), echo.clone(), average_rows(&all), start.elapsed().as_secs_f64());
        if let Value::Object(map) = serde_json::to_value(&entry).expect("serializable") {
            record.summary.extra = map;
        }
        records.push(record);
        entries.push(entry);
    }
    let table = comparison_table(&records, spacing, budget);
    let wins = auto_wins(&entries);
    let summary = json!({
        "kind": "mg-compare",
        "n": n,
        "recommended_r": recommended,
        "comm_budget": budget,
        "entries": entries,
        "auto_wins": wins,
        "failures": failures,
    });
    Ok(ExperimentOutput { records, tables: vec![("mg_compare.csv".into(), table)], summary, failures })
}

/// Repetitions in which the `auto` entry ends at or below the `R = 1` entry.
/// A failed vanilla run counts as a win, a failed `auto` run as a loss.
pub fn auto_wins(entries: &[MgEntry]) -> Option<usize> {
    let vanilla = entries.iter().find(|e| e.rounds == 1 && !e.auto)?;
    let auto = entries.iter().find(|e| e.auto)?;
    Some(
        auto.final_objectives
            .iter()
            .zip(&vanilla.final_objectives)
            .filter(|(a, v)| match (a, v) {
                (Some(a), Some(v)) => a <= v,
                (Some(_), None) => true,
                _ => false,
            })
            .count(),
    )
}

/// Objective of every record on a common communication-round grid, taking
/// the latest logged row at or before each grid point.
fn comparison_table(records: &[RunRecord], spacing: usize, budget: usize) -> String {
    let mut out = String::from("comm_rounds");
    for r in records {
        out.push(',');
        out.push_str(&r.name);
    }
    out.push('\n');
    let mut g = spacing;
    while g <= budget {
        out.push_str(&g.to_string());
        for r in records {
            out.push(',');
            let v = r.rows.iter().take_while(|row| row.comm_rounds <= g).last().and_then(|row| row.objective);
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
        g += spacing;
    }
    out
}

pub fn config_echo(cfg: &ExperimentConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("serializable");
    if let Ok(seed) = cfg.base_seed() {
        v["run"]["seed"] = json!(seed);
    }
    v
}

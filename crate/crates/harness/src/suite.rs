//! Invariant suite: every spectral verifier and optimizer probe over a set of
//! built-in topologies, reported as measured/bound ratios.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rowgossip_core::optim::{run, Algorithm, Network, RunSpec};
use rowgossip_core::problems::{noisy, LogisticConfig};
use rowgossip_core::rng::{derive_seed, seeded};
use rowgossip_core::spectral::{
    check_diag_floor, compute_metrics, power_envelope, verify_diag_convergence, verify_rolling_sum,
};
use rowgossip_core::topology::{
    build_directed_ring, build_exponential, build_geometric, build_grid, build_nearest_neighbor, weights_from_indegree,
};
use rowgossip_core::{MixingMatrix, NetworkMetrics, Tolerances};
use serde::Serialize;

use crate::error::HarnessResult;

const ROLLING_SEQUENCES: u64 = 100;
const ROLLING_LENGTH: usize = 40;
const DIAG_K_MAX: usize = 30;
const PROBE_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub name: String,
    pub entries: DMatrix<f64>,
}

impl SuiteCase {
    pub fn new(name: impl Into<String>, entries: DMatrix<f64>) -> Self {
        Self { name: name.into(), entries }
    }

    fn from_matrix(name: &str, a: MixingMatrix) -> Self {
        Self::new(name, a.entries().clone())
    }
}

/// exp8, exp16, ring5, ring16, grid4x4, geometric16, nearest16 and the
/// single-node network.
pub fn default_cases() -> HarnessResult<Vec<SuiteCase>> {
    let w = |g| weights_from_indegree(&g);
    Ok(vec![
        SuiteCase::from_matrix("exp8", w(build_exponential(8)?)?),
        SuiteCase::from_matrix("exp16", w(build_exponential(16)?)?),
        SuiteCase::from_matrix("ring5", w(build_directed_ring(5)?)?),
        SuiteCase::from_matrix("ring16", w(build_directed_ring(16)?)?),
        SuiteCase::from_matrix("grid4x4", w(build_grid(4, 4)?)?),
        SuiteCase::from_matrix("geometric16", w(build_geometric(16, 0.5, 1)?)?),
        SuiteCase::from_matrix("nearest16", w(build_nearest_neighbor(16, 3, 1)?)?),
        SuiteCase::from_matrix("single", w(build_exponential(1)?)?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Worst measured/bound ratio; at most 1 when the check passes.
    pub ratio: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn ratio(name: &str, ratio: f64, passed: bool) -> Self {
        Self { name: name.into(), ratio, passed, detail: None }
    }

    fn failed(name: &str, detail: impl ToString) -> Self {
        Self { name: name.into(), ratio: f64::INFINITY, passed: false, detail: Some(detail.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub n: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failed_cases(&self) -> Vec<&str> {
        self.cases.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// `measured / bound`, with `0/0 = 0`.
fn ratio(measured: f64, bound: f64) -> f64 {
    if measured == 0.0 {
        0.0
    } else {
        measured / bound
    }
}

pub fn run_invariant_suite(cases: &[SuiteCase], tol: &Tolerances) -> SuiteReport {
    let cases: Vec<CaseReport> = cases.iter().map(|c| run_case(c, tol)).collect();
    let passed = cases.iter().all(|c| c.passed);
    SuiteReport { cases, passed }
}

fn run_case(case: &SuiteCase, tol: &Tolerances) -> CaseReport {
    let n = case.entries.nrows();
    let mut checks = Vec::new();
    let finish = |checks: Vec<Check>| {
        let passed = checks.iter().all(|c| c.passed);
        CaseReport { name: case.name.clone(), n, checks, passed }
    };
    let a = match MixingMatrix::with_tolerances(case.entries.clone(), tol) {
        Ok(a) => a,
        Err(e) => {
            checks.push(Check::failed("validation", e));
            return finish(checks);
        }
    };
    checks.push(Check::ratio("validation", 0.0, true));
    let metrics = match compute_metrics(&a, None, tol) {
        Ok(m) => m,
        Err(e) => {
            checks.push(Check::failed("metrics", e));
            return finish(checks);
        }
    };
    checks.push(Check::ratio("perron_residual", ratio(metrics.perron_residual, tol.perron), metrics.perron_residual <= tol.perron));

    let (worst, fail) = power_envelope(&a, &metrics, DIAG_K_MAX, tol);
    checks.push(Check::ratio("power_envelope", worst, fail.is_none()));

    checks.push(rolling_sum_check(&a, &metrics));
    checks.push(diag_convergence_check(&a, &metrics, tol));

    let k = metrics.diag_floor_threshold().max(1);
    checks.push(match check_diag_floor(&a, &metrics, k) {
        Ok(r) => Check::ratio("diag_floor", ratio(r.floor, r.min_diag), r.holds),
        Err(e) => Check::failed("diag_floor", e),
    });

    for (name, algorithm, alpha) in [
        ("probes_gt", Algorithm::PullDiagGt, 0.01 / n as f64),
        ("probes_mg", Algorithm::MgPullDiagGt { rounds: 3 }, 0.01),
    ] {
        checks.push(probe_check(name, &a, tol, algorithm, alpha));
    }
    finish(checks)
}

fn rolling_sum_check(a: &MixingMatrix, metrics: &NetworkMetrics) -> Check {
    let n = a.n();
    let mut worst = 0.0_f64;
    let mut passed = true;
    for s in 0..ROLLING_SEQUENCES {
        let mut rng = seeded(derive_seed(0x5eed, s));
        let deltas: Vec<DMatrix<f64>> = (0..ROLLING_LENGTH)
            .map(|_| DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        match verify_rolling_sum(a, metrics, &deltas) {
            Ok(r) => {
                worst = worst.max(ratio(r.lhs, r.rhs));
                passed &= r.holds;
            }
            Err(e) => return Check::failed("rolling_sum", e),
        }
    }
    Check::ratio("rolling_sum", worst, passed)
}

fn diag_convergence_check(a: &MixingMatrix, metrics: &NetworkMetrics, tol: &Tolerances) -> Check {
    match verify_diag_convergence(a, metrics, DIAG_K_MAX, tol) {
        Ok(r) => {
            let worst = r
                .rows
                .iter()
                .flat_map(|row| {
                    [
                        ratio(row.weighted_dev, row.weighted_bound),
                        ratio(row.inverse_dev, row.inverse_bound),
                        ratio(row.step_dev, row.step_bound),
                    ]
                })
                .fold(0.0, f64::max);
            Check::ratio("diag_convergence", worst, r.all_hold())
        }
        Err(e) => Check::failed("diag_convergence", e),
    }
}

fn probe_check(name: &str, a: &MixingMatrix, tol: &Tolerances, algorithm: Algorithm, alpha: f64) -> Check {
    let n = a.n();
    let net = match Network::with_tolerances(a.clone(), *tol) {
        Ok(net) => net,
        Err(e) => return Check::failed(name, e),
    };
    let data = LogisticConfig { total_samples: 100 * n, batch: 10, ..LogisticConfig::default() };
    let oracle = match data.build(n, 7) {
        Ok(o) => noisy(o, 1.0),
        Err(e) => return Check::failed(name, e),
    };
    let mut spec = RunSpec::new(algorithm, alpha, PROBE_STEPS * algorithm.rounds(), 11);
    spec.probes = true;
    match run(&spec, &net, &oracle) {
        Ok(reports) => {
            let worst = reports
                .iter()
                .map(|r| {
                    let c = r.centroid_residual.unwrap_or(0.0) / tol.centroid_probe;
                    let y = r.tracker_residual.unwrap_or(0.0) / tol.tracker_probe;
                    c.max(y)
                })
                .fold(0.0, f64::max);
            Check::ratio(name, worst, worst <= 1.0)
        }
        Err(f) => Check::failed(name, f.error),
    }
}

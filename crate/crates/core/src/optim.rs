//! Pull-Diag gradient tracking and its multi-gossip variant.
//!
//! One iteration with `R` gossip rounds per iteration (`R = 1` is plain
//! Pull-Diag-GT):
//!
//! ```text
//! x ← A^R (x − α y)          v ← A^R v
//! g⁺ ← R-sample minibatch at the new x
//! ψ_i = y_i + g⁺_i / [v_i]_i − g_i / d_i
//! y ← A^R ψ                  g ← g⁺,  d_i ← [v_i]_i
//! ```
//!
//! Node `i` only reads its own row of `v`, so `D_k = Diag(A^k)` is never
//! formed globally. Two identities hold exactly in exact arithmetic and can be
//! probed every step: `πᵀx⁺ = πᵀx − α πᵀy` and `πᵀy = πᵀ D⁻¹ g`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gossip::{column_mean, mix_rounds, weighted_centroid};
use crate::problems::GradientOracle;
use crate::rng::sample_stream;
use crate::spectral::{perron_vector, NetworkMetrics};
use crate::tolerances::Tolerances;
use crate::topology::MixingMatrix;

/// A mixing matrix together with its Perron vector.
#[derive(Debug, Clone)]
pub struct Network {
    matrix: MixingMatrix,
    pi: Vec<f64>,
    tol: Tolerances,
}

impl Network {
    pub fn new(matrix: MixingMatrix) -> Result<Self> {
        Self::with_tolerances(matrix, Tolerances::default())
    }

    /// Solves for `π` at the probe tolerance, falling back to the regular
    /// Perron tolerance if rounding keeps the residual above it.
    pub fn with_tolerances(matrix: MixingMatrix, tol: Tolerances) -> Result<Self> {
        let pi = match perron_vector(&matrix, tol.perron_probe, None) {
            Ok(pi) => pi,
            Err(Error::ConvergenceFailure { .. }) => perron_vector(&matrix, tol.perron, None)?,
            Err(e) => return Err(e),
        };
        Ok(Self { matrix, pi, tol })
    }

    pub fn matrix(&self) -> &MixingMatrix {
        &self.matrix
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }
}

/// Stacked optimizer state; row `i` of each matrix belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Row `i` is node `i`'s running estimate of `e_iᵀA^k`.
    pub v: DMatrix<f64>,
    pub d_prev: Vec<f64>,
    pub iter: usize,
    pub alpha: f64,
    pub rounds: usize,
    pub seed: u64,
    pub comm_rounds: usize,
    /// Stochastic gradients drawn per node after initialization.
    pub samples: usize,
    pub diag_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iter: usize,
    pub comm_rounds: usize,
    pub samples: usize,
    /// `‖(1/n) Σ_i ∇f_i(x_i)‖` with exact gradients.
    pub grad_norm: f64,
    /// `‖x − 1πᵀx‖_F`.
    pub consensus_error: f64,
    /// `‖πᵀy − 1ᵀg‖`.
    pub descent_deviation: f64,
    /// `f(πᵀx)` when the problem exposes function values.
    pub centroid_f: Option<f64>,
    pub min_diag: f64,
    pub centroid_residual: Option<f64>,
    pub tracker_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    PullDiagGt,
    MgPullDiagGt { rounds: usize },
}

impl Algorithm {
    pub fn rounds(&self) -> usize {
        match self {
            Algorithm::PullDiagGt => 1,
            Algorithm::MgPullDiagGt { rounds } => *rounds,
        }
    }
}

/// `⌈3(1 + ln κ + ln n)/(1 − β)⌉`, at least 1.
pub fn recommended_rounds(beta: f64, kappa: f64, n: f64) -> usize {
    let raw = 3.0 * (1.0 + kappa.ln() + n.ln()) / (1.0 - beta);
    ((raw - 1e-9).ceil() as usize).max(1)
}

pub fn recommended_r(metrics: &NetworkMetrics) -> usize {
    recommended_rounds(metrics.beta, metrics.kappa, metrics.n as f64)
}

/// `⌈(1 + 3 ln κ + 3 ln n)/(1 − β)⌉`, at least 1.
pub fn recommended_r_appendix(metrics: &NetworkMetrics) -> usize {
    let raw = (1.0 + 3.0 * metrics.kappa.ln() + 3.0 * (metrics.n as f64).ln()) / (1.0 - metrics.beta);
    ((raw - 1e-9).ceil() as usize).max(1)
}

fn check_problem<O: GradientOracle + ?Sized>(net: &Network, x0: &[f64], oracle: &O) -> Result<()> {
    if oracle.nodes() != net.n() {
        return Err(Error::Shape(format!("oracle has {} nodes, network has {}", oracle.nodes(), net.n())));
    }
    if x0.len() != oracle.dim() {
        return Err(Error::Shape(format!("x0 has length {}, problem dimension is {}", x0.len(), oracle.dim())));
    }
    Ok(())
}

/// Stacked `R`-sample minibatch gradients, node `i` at row `i` of `x`.
fn minibatch<O: GradientOracle + ?Sized>(oracle: &O, x: &DMatrix<f64>, seed: u64, iter: usize, rounds: usize) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut out = DMatrix::zeros(n, d);
    let mut point = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for i in 0..n {
        point.iter_mut().enumerate().for_each(|(c, p)| *p = x[(i, c)]);
        sum.fill(0.0);
        for s in 0..rounds {
            let mut rng = sample_stream(seed, i, iter, s);
            oracle.stochastic_gradient(i, &point, &mut rng, &mut buf);
            sum.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        for c in 0..d {
            out[(i, c)] = sum[c] / rounds as f64;
        }
    }
    out
}

pub fn init_gt<O: GradientOracle + ?Sized>(net: &Network, x0: &[f64], oracle: &O, alpha: f64, seed: u64) -> Result<GtState> {
    init_mg(net, x0, oracle, alpha, 1, seed)
}

/// Common start `x = 1x0ᵀ`, `v = I`, `d = 1` and `g = y` an `R`-sample
/// minibatch at `x0`.
pub fn init_mg<O: GradientOracle + ?Sized>(
    net: &Network,
    x0: &[f64],
    oracle: &O,
    alpha: f64,
    rounds: usize,
    seed: u64,
) -> Result<GtState> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {alpha}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("at least one gossip round per iteration is required".into()));
    }
    check_problem(net, x0, oracle)?;
    let n = net.n();
    let x = DMatrix::from_fn(n, x0.len(), |_, c| x0[c]);
    let g = minibatch(oracle, &x, seed, 0, rounds);
    Ok(GtState {
        y: g.clone(),
        g,
        x,
        v: DMatrix::identity(n, n),
        d_prev: vec![1.0; n],
        iter: 0,
        alpha,
        rounds,
        seed,
        comm_rounds: 0,
        samples: 0,
        diag_floor: net.tol.diag_floor,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Probes {
    centroid: Option<f64>,
    tracker: Option<f64>,
}

fn row_norm(m: &DMatrix<f64>, i: usize) -> f64 {
    m.row(i).norm()
}

fn vec_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Advances one iteration with `rounds` gossip rounds and optionally
/// evaluates both invariants.
fn advance<O: GradientOracle + ?Sized>(
    state: &mut GtState,
    net: &Network,
    oracle: &O,
    rounds: usize,
    probes: bool,
) -> Result<Probes> {
    let a = net.matrix();
    let pi = net.pi();
    let n = net.n();
    let d = state.x.ncols();

    let mut w = &state.x - &state.y * state.alpha;
    let expected_centroid = probes.then(|| {
        let x_c = weighted_centroid(&state.x, pi);
        let y_c = weighted_centroid(&state.y, pi);
        let scale: f64 = (0..n).map(|i| pi[i] * row_norm(&w, i)).sum();
        let target: Vec<f64> = x_c.iter().zip(&y_c).map(|(x, y)| x - state.alpha * y).collect();
        (target, scale)
    });

    let mut scratch = DMatrix::zeros(n, d);
    mix_rounds(a, &mut w, &mut scratch, rounds);
    state.x = w;
    let mut v_scratch = DMatrix::zeros(n, n);
    mix_rounds(a, &mut state.v, &mut v_scratch, rounds);
    let comm = state.comm_rounds + rounds;

    let d_new: Vec<f64> = (0..n).map(|i| state.v[(i, i)]).collect();
    if let Some((node, &value)) = d_new.iter().enumerate().find(|(_, &v)| v <= state.diag_floor) {
        return Err(Error::SmallDiagonal { node, rounds: comm, value });
    }

    let g_new = minibatch(oracle, &state.x, state.seed, state.iter + 1, rounds);
    let mut psi = state.y.clone();
    for i in 0..n {
        for c in 0..d {
            psi[(i, c)] += g_new[(i, c)] / d_new[i] - state.g[(i, c)] / state.d_prev[i];
        }
    }
    mix_rounds(a, &mut psi, &mut scratch, rounds);
    state.y = psi;
    state.g = g_new;
    state.d_prev = d_new;
    state.iter += 1;
    state.comm_rounds = comm;
    state.samples += rounds;

    let mut out = Probes::default();
    if let Some((target, scale)) = expected_centroid {
        let got = weighted_centroid(&state.x, pi);
        out.centroid = Some(vec_dist(&got, &target) / scale.max(f64::MIN_POSITIVE));
        let y_c = weighted_centroid(&state.y, pi);
        let mut corrected = vec![0.0; d];
        let mut scale = 0.0;
        for i in 0..n {
            let w = pi[i] / state.d_prev[i];
            for (c, t) in corrected.iter_mut().enumerate() {
                *t += w * state.g[(i, c)];
            }
            scale += w * row_norm(&state.g, i);
        }
        let norm_y = y_c.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.tracker = Some(vec_dist(&y_c, &corrected) / scale.max(norm_y).max(f64::MIN_POSITIVE));
    }
    Ok(out)
}

/// Metrics of the current state.
pub fn report<O: GradientOracle + ?Sized>(state: &GtState, net: &Network, oracle: &O) -> StepReport {
    let pi = net.pi();
    let (n, d) = state.x.shape();
    let mut total = vec![0.0; d];
    let mut point = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for i in 0..n {
        point.iter_mut().enumerate().for_each(|(c, p)| *p = state.x[(i, c)]);
        oracle.local_gradient(i, &point, &mut buf);
        total.iter_mut().zip(&buf).for_each(|(t, b)| *t += b);
    }
    let grad_norm = total.iter().map(|t| (t / n as f64).powi(2)).sum::<f64>().sqrt();
    let centroid = weighted_centroid(&state.x, pi);
    let mut consensus = 0.0;
    for i in 0..n {
        for c in 0..d {
            consensus += (state.x[(i, c)] - centroid[c]).powi(2);
        }
    }
    let y_c = weighted_centroid(&state.y, pi);
    let g_sum: Vec<f64> = column_mean(&state.g).iter().map(|m| m * n as f64).collect();
    StepReport {
        iter: state.iter,
        comm_rounds: state.comm_rounds,
        samples: state.samples,
        grad_norm,
        consensus_error: consensus.sqrt(),
        descent_deviation: vec_dist(&y_c, &g_sum),
        centroid_f: oracle.objective(&centroid),
        min_diag: state.d_prev.iter().copied().fold(f64::INFINITY, f64::min),
        centroid_residual: None,
        tracker_residual: None,
    }
}

fn checked_step<O: GradientOracle + ?Sized>(
    state: &mut GtState,
    net: &Network,
    oracle: &O,
    rounds: usize,
) -> Result<StepReport> {
    let probes = advance(state, net, oracle, rounds, true)?;
    let mut rep = report(state, net, oracle);
    rep.centroid_residual = probes.centroid;
    rep.tracker_residual = probes.tracker;
    Ok(rep)
}

/// One Pull-Diag-GT iteration (a single gossip round), with probe residuals
/// attached to the report.
pub fn gt_step<O: GradientOracle + ?Sized>(state: &mut GtState, net: &Network, oracle: &O) -> Result<StepReport> {
    checked_step(state, net, oracle, 1)
}

/// One MG-Pull-Diag-GT iteration with `rounds` gossip rounds and an
/// `rounds`-sample minibatch.
pub fn mg_step<O: GradientOracle + ?Sized>(
    state: &mut GtState,
    net: &Network,
    oracle: &O,
    rounds: usize,
) -> Result<StepReport> {
    if rounds == 0 {
        return Err(Error::InvalidParameter("at least one gossip round per iteration is required".into()));
    }
    checked_step(state, net, oracle, rounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub alpha: f64,
    /// Total communication rounds `K`; the run performs `⌊K/R⌋` iterations.
    pub comm_budget: usize,
    pub seed: u64,
    /// Check both invariants every iteration and abort on violation.
    pub probes: bool,
    /// Emit a report every this many iterations (and after the last one).
    pub log_every: usize,
    /// Common starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

impl RunSpec {
    pub fn new(algorithm: Algorithm, alpha: f64, comm_budget: usize, seed: u64) -> Self {
        Self { algorithm, alpha, comm_budget, seed, probes: false, log_every: 1, x0: None }
    }

    pub fn iterations(&self) -> usize {
        self.comm_budget / self.algorithm.rounds().max(1)
    }
}

/// A failed run together with the reports emitted before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Vec<StepReport>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} reports)", self.error, self.partial.len())
    }
}

impl std::error::Error for RunFailure {}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self { error, partial: Vec::new() }
    }
}

/// Runs `⌊K/R⌋` iterations from a common start.
pub fn run<O: GradientOracle + ?Sized>(
    spec: &RunSpec,
    net: &Network,
    oracle: &O,
) -> std::result::Result<Vec<StepReport>, RunFailure> {
    let rounds = spec.algorithm.rounds();
    if rounds == 0 {
        return Err(Error::InvalidParameter("at least one gossip round per iteration is required".into()).into());
    }
    if spec.comm_budget == 0 {
        return Ok(Vec::new());
    }
    if spec.comm_budget < rounds {
        return Err(Error::InvalidParameter(format!("budget {} is below R = {rounds}", spec.comm_budget)).into());
    }
    let x0 = spec.x0.clone().unwrap_or_else(|| vec![0.0; oracle.dim()]);
    let mut state = init_mg(net, &x0, oracle, spec.alpha, rounds, spec.seed)?;
    let every = spec.log_every.max(1);
    let total = spec.iterations();
    let tol = net.tolerances();
    let mut reports = Vec::with_capacity(total / every + 1);
    for t in 1..=total {
        let probes = match advance(&mut state, net, oracle, rounds, spec.probes) {
            Ok(p) => p,
            Err(error) => return Err(RunFailure { error, partial: reports }),
        };
        if spec.probes {
            let c = probes.centroid.unwrap_or(0.0);
            let y = probes.tracker.unwrap_or(0.0);
            if !(c <= tol.centroid_probe) || !(y <= tol.tracker_probe) {
                let error = Error::InvariantViolation(format!(
                    "iteration {t}: centroid residual {c:e}, tracker residual {y:e}"
                ));
                return Err(RunFailure { error, partial: reports });
            }
        }
        if t % every == 0 || t == total {
            let mut rep = report(&state, net, oracle);
            rep.centroid_residual = probes.centroid;
            rep.tracker_residual = probes.tracker;
            if !rep.grad_norm.is_finite() || !rep.consensus_error.is_finite() {
                let error = Error::InvariantViolation(format!("iteration {t}: iterates diverged"));
                reports.push(rep);
                return Err(RunFailure { error, partial: reports });
            }
            reports.push(rep);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic, noisy, Quadratic};
    use crate::topology::{build_exponential, weights_from_indegree};

    fn exp_net(n: usize) -> Network {
        Network::new(weights_from_indegree(&build_exponential(n).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn recommended_rounds_formula() {
        assert_eq!(recommended_rounds(0.0, 1.0, 1.0), 3);
        assert_eq!(recommended_rounds(0.5, 1.0, 8.0), 19);
        assert_eq!(recommended_rounds(0.0, 1.0, std::f64::consts::E), 6);
    }

    #[test]
    fn init_on_quadratic_gives_negative_centers() {
        let net = exp_net(4);
        let q = make_quadratic(4, 2, 1.0, 3).unwrap();
        let s = init_gt(&net, &[0.0, 0.0], &q, 0.1, 0).unwrap();
        assert_eq!(s.g, -q.centers().clone());
        assert_eq!(s.y, s.g);
        assert_eq!(s.v, DMatrix::identity(4, 4));
        assert_eq!(s.d_prev, vec![1.0; 4]);
    }

    #[test]
    fn init_rejects_bad_parameters() {
        let net = exp_net(4);
        let q = make_quadratic(4, 2, 1.0, 3).unwrap();
        assert!(init_gt(&net, &[0.0, 0.0], &q, 0.0, 0).is_err());
        assert!(init_mg(&net, &[0.0, 0.0], &q, 0.1, 0, 0).is_err());
        assert!(matches!(init_gt(&net, &[0.0], &q, 0.1, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn single_node_is_gradient_descent() {
        let net = Network::new(MixingMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap()).unwrap();
        let q = Quadratic::with_centers(DMatrix::from_row_slice(1, 2, &[1.0, -2.0]));
        let alpha = 0.3;
        let mut s = init_gt(&net, &[0.0, 0.0], &q, alpha, 0).unwrap();
        let mut x = [0.0, 0.0];
        for _ in 0..20 {
            gt_step(&mut s, &net, &q).unwrap();
            x = [x[0] - alpha * (x[0] - 1.0), x[1] - alpha * (x[1] + 2.0)];
            assert!((s.x[(0, 0)] - x[0]).abs() < 1e-14 && (s.x[(0, 1)] - x[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn mg_with_one_round_matches_gt_bitwise() {
        let net = exp_net(8);
        let q = noisy(make_quadratic(8, 3, 1.0, 2).unwrap(), 1.0);
        let mut a = init_gt(&net, &[0.0; 3], &q, 0.05, 11).unwrap();
        let mut b = init_mg(&net, &[0.0; 3], &q, 0.05, 1, 11).unwrap();
        for _ in 0..25 {
            let ra = gt_step(&mut a, &net, &q).unwrap();
            let rb = mg_step(&mut b, &net, &q, 1).unwrap();
            assert_eq!(ra, rb);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn run_budget_conventions() {
        let net = exp_net(4);
        let q = make_quadratic(4, 2, 1.0, 3).unwrap();
        let spec = RunSpec::new(Algorithm::MgPullDiagGt { rounds: 3 }, 0.1, 0, 0);
        assert!(run(&spec, &net, &q).unwrap().is_empty());
        let spec = RunSpec { comm_budget: 2, ..spec };
        assert!(run(&spec, &net, &q).is_err());
        let spec = RunSpec { comm_budget: 10, ..spec };
        let rec = run(&spec, &net, &q).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.iter().map(|r| r.comm_rounds).collect::<Vec<_>>(), vec![3, 6, 9]);
        assert!(rec.iter().all(|r| r.samples == r.comm_rounds));
    }

    #[test]
    fn small_diagonal_aborts_with_partial_record() {
        let net = exp_net(8);
        let q = make_quadratic(8, 2, 1.0, 3).unwrap();
        let mut spec = RunSpec::new(Algorithm::PullDiagGt, 0.01, 10, 0);
        let mut net = net;
        net.tol.diag_floor = 0.2;
        spec.log_every = 1;
        let err = run(&spec, &net, &q).unwrap_err();
        assert!(matches!(err.error, Error::SmallDiagonal { node: 0, rounds: 2, .. }));
        assert_eq!(err.partial.len(), 1);
    }
}

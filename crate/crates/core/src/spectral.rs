//! Perron vectors, weighted operator norms and the network metrics that
//! govern row-stochastic gossip.
//!
//! For a primitive row-stochastic `A` with Perron vector `π` (`πᵀA = πᵀ`,
//! `1ᵀπ = 1`) and `A_∞ = 1πᵀ`:
//!
//! * `β_A = ‖A − A_∞‖_π` where `‖W‖_π = ‖Π^{1/2} W Π^{-1/2}‖₂`,
//! * `κ_A = max(π) / min(π)`,
//! * `M_A = max_{k≥1} ‖A^k − A_∞‖₂` and `s_A = M_A (1 + ½ ln κ_A) / (1 − β_A)`,
//! * `θ_A = sup_k max_i [A^k]_ii^{-1}`.
//!
//! Every routine here is a pure function of its inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;
use crate::topology::MixingMatrix;

/// Spectral diagnostics of a mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMetrics {
    pub n: usize,
    pub pi: Vec<f64>,
    pub beta: f64,
    pub kappa: f64,
    /// `max_{1≤k≤horizon} ‖A^k − A_∞‖₂`.
    pub m_a: f64,
    pub s_a: f64,
    /// `max_i [A^k]_ii^{-1}` over `k ≤ horizon` and the limit `1/min(π)`.
    pub theta: f64,
    /// Certified upper bound on `θ_A` over all `k ≥ 1`, available when the
    /// horizon reaches the diagonal-floor threshold.
    pub theta_bound: Option<f64>,
    pub horizon: usize,
    pub perron_residual: f64,
    /// True when `√κ β^horizon ≤ m_a`, i.e. no later power can exceed `m_a`.
    pub m_a_certified: bool,
}

impl NetworkMetrics {
    pub fn pi_min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest `k` for which `min_i [A^k]_ii ≥ 1/(2nκ)` is guaranteed.
    pub fn diag_floor_threshold(&self) -> usize {
        diag_floor_threshold(self.n, self.beta, self.kappa)
    }
}

fn ceil_guarded(x: f64) -> usize {
    // Keeps values like 3.0000000000000004 from rounding up.
    (x - 1e-9).ceil().max(0.0) as usize
}

/// `⌈(2 ln κ + 2 ln n) / (1 − β)⌉`.
pub fn diag_floor_threshold(n: usize, beta: f64, kappa: f64) -> usize {
    ceil_guarded((2.0 * kappa.ln() + 2.0 * (n as f64).ln()) / (1.0 - beta))
}

/// `1 πᵀ`.
pub fn limit_matrix(pi: &[f64]) -> DMatrix<f64> {
    let n = pi.len();
    DMatrix::from_fn(n, n, |_, j| pi[j])
}

/// `A^k` by repeated squaring (`A^0 = I`).
pub fn matrix_power(a: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `‖πᵀA − πᵀ‖_∞`.
pub fn perron_residual(a: &MixingMatrix, pi: &[f64]) -> f64 {
    let next = transpose_apply(a, pi);
    next.iter().zip(pi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn transpose_apply(a: &MixingMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, &vi) in v.iter().enumerate() {
        for &(j, aij) in a.row_support(i) {
            out[j] += aij * vi;
        }
    }
    out
}

const PERRON_WARMUP: usize = 10;

/// Perron vector by power iteration on `v ← Aᵀv`, starting from the uniform
/// vector.
///
/// Without an explicit `max_iter` the budget is `100 n ⌈1/(1 − β̂)⌉`, where
/// `β̂` is the residual contraction observed over the first ten steps.
pub fn perron_vector(a: &MixingMatrix, tol: f64, max_iter: Option<usize>) -> Result<Vec<f64>> {
    let n = a.n();
    let mut v = vec![1.0 / n as f64; n];
    let mut first_residual = None;
    let mut budget = max_iter.unwrap_or(usize::MAX);
    let mut iter = 0;
    loop {
        let mut next = transpose_apply(a, &v);
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= sum);
        let residual = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = next;
        iter += 1;
        if residual <= tol {
            break;
        }
        match first_residual {
            None => first_residual = Some(residual),
            Some(r0) if iter == PERRON_WARMUP + 1 && max_iter.is_none() => {
                let rate = (residual / r0).powf(1.0 / PERRON_WARMUP as f64).clamp(0.0, 1.0 - 1e-9);
                let steps = (1.0 / (1.0 - rate)).ceil().min(1e9) as usize;
                budget = 100usize.saturating_mul(n).saturating_mul(steps).max(1000);
            }
            _ => {}
        }
        if iter >= budget {
            return Err(Error::ConvergenceFailure { iterations: iter, residual });
        }
    }
    if v.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidMatrix("Perron vector has non-positive entries".into()));
    }
    Ok(v)
}

const NORM_MAX_ITER: usize = 200_000;

/// Largest singular value of `w`, by power iteration on `wᵀw`.
///
/// Stops when the estimated remaining error (from the observed contraction of
/// successive changes) falls below `rel_tol` relative to the estimate.
pub fn spectral_norm(w: &DMatrix<f64>, rel_tol: f64) -> f64 {
    let n = w.ncols();
    if n == 0 || w.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    // Deterministic start with components along every direction.
    let mut u = DVector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    u /= u.norm();
    let wt = w.transpose();
    let mut sigma = 0.0_f64;
    let mut prev_delta = f64::INFINITY;
    for _ in 0..NORM_MAX_ITER {
        let wu = w * &u;
        let est = wu.norm();
        let mut next = &wt * wu;
        let len = next.norm();
        if len == 0.0 {
            return est;
        }
        next /= len;
        u = next;
        let delta = (est - sigma).abs();
        sigma = est;
        let rate = if prev_delta.is_finite() && prev_delta > 0.0 { (delta / prev_delta).min(0.999_999) } else { 0.999_999 };
        prev_delta = delta;
        if delta <= rel_tol * sigma && delta * rate / (1.0 - rate) <= rel_tol * sigma {
            break;
        }
    }
    sigma
}

/// `‖Π^{1/2} W Π^{-1/2}‖₂` with `Π = diag(π)`.
pub fn pi_operator_norm(w: &DMatrix<f64>, pi: &[f64]) -> Result<f64> {
    pi_operator_norm_tol(w, pi, Tolerances::default().norm_rel)
}

pub fn pi_operator_norm_tol(w: &DMatrix<f64>, pi: &[f64], rel_tol: f64) -> Result<f64> {
    let n = pi.len();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::Shape(format!("{}x{} matrix against weight vector of length {n}", w.nrows(), w.ncols())));
    }
    if let Some((i, &p)) = pi.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
        return Err(Error::InvalidWeight(format!("entry {i} = {p} is not strictly positive")));
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| pi[i].sqrt() * w[(i, j)] / pi[j].sqrt());
    Ok(spectral_norm(&scaled, rel_tol))
}

/// Full metric set. `k_max = None` picks the horizon
/// `max(4n, 10⌈1/(1−β)⌉, diag-floor threshold)`.
pub fn compute_metrics(a: &MixingMatrix, k_max: Option<usize>, tol: &Tolerances) -> Result<NetworkMetrics> {
    let n = a.n();
    let pi = perron_vector(a, tol.perron, None)?;
    let perron_residual = perron_residual(a, &pi);
    let a_inf = limit_matrix(&pi);
    let deviation = a.entries() - &a_inf;
    let beta = pi_operator_norm_tol(&deviation, &pi, tol.norm_rel)?;
    let pi_max = pi.iter().copied().fold(0.0, f64::max);
    let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let kappa = pi_max / pi_min;
    let threshold = diag_floor_threshold(n, beta, kappa);

    let horizon = match k_max {
        Some(0) => return Err(Error::InvalidParameter("k_max must be at least 1".into())),
        Some(k) => k,
        None => {
            let relax = ceil_guarded(1.0 / (1.0 - beta)).max(1);
            (4 * n).max(10 * relax).max(threshold).max(1)
        }
    };

    let mut power = a.entries().clone();
    let mut m_a = 0.0_f64;
    let mut theta = 1.0 / pi_min;
    let sqrt_kappa = kappa.sqrt();
    for k in 1..=horizon {
        if k > 1 {
            power = &power * a.entries();
        }
        for i in 0..n {
            let d = power[(i, i)];
            if d <= 0.0 {
                theta = f64::INFINITY;
            } else {
                theta = theta.max(1.0 / d);
            }
        }
        // ‖A^k − A_∞‖₂ ≤ √κ β^k: once that envelope is below the running max,
        // later powers cannot raise it.
        if sqrt_kappa * beta.powi(k as i32) * (1.0 + 1e-6) >= m_a {
            m_a = m_a.max(spectral_norm(&(&power - &a_inf), tol.norm_rel));
        }
    }
    let m_a_certified = sqrt_kappa * beta.powi(horizon as i32) <= m_a || n == 1;
    let s_a = m_a * (1.0 + 0.5 * kappa.ln()) / (1.0 - beta);
    let theta_bound = (horizon >= threshold).then(|| theta.max(2.0 * n as f64 * kappa));

    Ok(NetworkMetrics {
        n,
        pi,
        beta,
        kappa,
        m_a,
        s_a,
        theta,
        theta_bound,
        horizon,
        perron_residual,
        m_a_certified,
    })
}

/// Metrics of the `R`-round operator `A^R`, used by the multi-gossip
/// analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGossipMetrics {
    pub rounds: usize,
    /// `‖A^R − A_∞‖_π`.
    pub beta_hat: f64,
    /// `max_{1≤t≤horizon} max_i [A^{tR}]_ii^{-1}`.
    pub theta_hat: f64,
    /// `max_{1≤t≤horizon} ‖A^{tR} − A_∞‖₂`.
    pub m_hat: f64,
    /// Rolling-sum constant of `A^R` with the `(1 + ½ ln κ)` factor.
    pub s_hat: f64,
    /// Same constant with the `2(1 + ln κ)` factor.
    pub s_hat_alt: f64,
    pub horizon: usize,
}

pub fn compute_mg_metrics(
    a: &MixingMatrix,
    metrics: &NetworkMetrics,
    rounds: usize,
    horizon: usize,
    tol: &Tolerances,
) -> Result<MultiGossipMetrics> {
    if rounds == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("rounds and horizon must be positive".into()));
    }
    let a_inf = limit_matrix(&metrics.pi);
    let step = matrix_power(a.entries(), rounds);
    let beta_hat = pi_operator_norm_tol(&(&step - &a_inf), &metrics.pi, tol.norm_rel)?;
    let mut power = step.clone();
    let mut theta_hat = 0.0_f64;
    let mut m_hat = 0.0_f64;
    for t in 1..=horizon {
        if t > 1 {
            power = &power * &step;
        }
        for i in 0..a.n() {
            theta_hat = theta_hat.max(1.0 / power[(i, i)]);
        }
        m_hat = m_hat.max(spectral_norm(&(&power - &a_inf), tol.norm_rel));
    }
    let ln_k = metrics.kappa.ln();
    Ok(MultiGossipMetrics {
        rounds,
        beta_hat,
        theta_hat,
        m_hat,
        s_hat: m_hat * (1.0 + 0.5 * ln_k) / (1.0 - beta_hat),
        s_hat_alt: m_hat * 2.0 * (1.0 + ln_k) / (1.0 - beta_hat),
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingSumReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates `Σ_{k=0}^{K} ‖Σ_{i=0}^{k} (A^{k+1−i} − A_∞) Δ⁽ⁱ⁾‖_F²` against
/// `s_A² Σ_i ‖Δ⁽ⁱ⁾‖_F²`.
///
/// Uses `A^m − A_∞ = (A − A_∞)^m`, so the inner sums follow the recursion
/// `S_k = (A − A_∞)(S_{k−1} + Δ⁽ᵏ⁾)`.
pub fn verify_rolling_sum(a: &MixingMatrix, metrics: &NetworkMetrics, deltas: &[DMatrix<f64>]) -> Result<RollingSumReport> {
    let n = a.n();
    let Some(first) = deltas.first() else {
        return Ok(RollingSumReport { lhs: 0.0, rhs: 0.0, holds: true });
    };
    let d = first.ncols();
    if let Some((i, bad)) = deltas.iter().enumerate().find(|(_, m)| m.nrows() != n || m.ncols() != d) {
        return Err(Error::Shape(format!("delta {i} is {}x{}, expected {n}x{d}", bad.nrows(), bad.ncols())));
    }
    let b = a.entries() - limit_matrix(&metrics.pi);
    let mut acc = DMatrix::zeros(n, d);
    let mut lhs = 0.0;
    let mut energy = 0.0;
    for delta in deltas {
        acc = &b * (acc + delta);
        lhs += acc.norm_squared();
        energy += delta.norm_squared();
    }
    let rhs = metrics.s_a * metrics.s_a * energy;
    Ok(RollingSumReport { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-9) })
}

/// Measured values and bounds of the diagonal-convergence inequalities at one
/// power `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagBoundRow {
    pub k: usize,
    /// `‖πᵀD_k^{-1} − 1ᵀ‖₂`.
    pub weighted_dev: f64,
    pub weighted_bound: f64,
    /// `‖D_k^{-1} − Π^{-1}‖₂`.
    pub inverse_dev: f64,
    pub inverse_bound: f64,
    /// `‖D_k^{-1} − D_{k+1}^{-1}‖₂`.
    pub step_dev: f64,
    pub step_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagConvergenceReport {
    /// `θ` used in the bounds: the metrics' estimate, raised to cover every
    /// diagonal seen up to `k_max + 1`.
    pub theta: f64,
    pub rows: Vec<DiagBoundRow>,
}

impl DiagConvergenceReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Checks, for `k = 1..=k_max` and `D_k = Diag(A^k)`:
/// `‖πᵀD_k^{-1} − 1ᵀ‖ ≤ θ√(nκ)β^k`, `‖D_k^{-1} − Π^{-1}‖₂ ≤ θ√(κ³n³)β^k` and
/// `‖D_k^{-1} − D_{k+1}^{-1}‖₂ ≤ 2θ√(κ³n³)β^k`.
pub fn verify_diag_convergence(
    a: &MixingMatrix,
    metrics: &NetworkMetrics,
    k_max: usize,
    tol: &Tolerances,
) -> Result<DiagConvergenceReport> {
    let n = a.n();
    let mut diags: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    let mut power = a.entries().clone();
    for k in 1..=k_max + 1 {
        if k > 1 {
            power = &power * a.entries();
        }
        let diag: Vec<f64> = (0..n).map(|i| power[(i, i)]).collect();
        if let Some(i) = diag.iter().position(|&d| d <= 0.0) {
            return Err(Error::ZeroDiagonal { k, node: i });
        }
        diags.push(diag);
    }
    let theta = diags
        .iter()
        .flatten()
        .map(|d| 1.0 / d)
        .fold(metrics.theta, f64::max);
    let nf = n as f64;
    let kappa = metrics.kappa;
    // Once β^k is tiny the measured deviations sit at the accuracy of π, so
    // use the tightest Perron solve available.
    let refined = perron_vector(a, tol.perron_probe, None).ok();
    let pi = refined.as_ref().unwrap_or(&metrics.pi);
    let rows = (1..=k_max)
        .map(|k| {
            let d = &diags[k - 1];
            let d_next = &diags[k];
            let beta_k = metrics.beta.powi(k as i32);
            let weighted_dev = pi.iter().zip(d).map(|(p, di)| (p / di - 1.0).powi(2)).sum::<f64>().sqrt();
            let inverse_dev = pi.iter().zip(d).map(|(p, di)| (1.0 / di - 1.0 / p).abs()).fold(0.0, f64::max);
            let step_dev = d.iter().zip(d_next).map(|(x, y)| (1.0 / x - 1.0 / y).abs()).fold(0.0, f64::max);
            let weighted_bound = theta * (nf * kappa).sqrt() * beta_k;
            let inverse_bound = theta * (kappa.powi(3) * nf.powi(3)).sqrt() * beta_k;
            let step_bound = 2.0 * inverse_bound;
            let holds = tol.within(weighted_dev, weighted_bound)
                && tol.within(inverse_dev, inverse_bound)
                && tol.within(step_dev, step_bound);
            DiagBoundRow { k, weighted_dev, weighted_bound, inverse_dev, inverse_bound, step_dev, step_bound, holds }
        })
        .collect();
    Ok(DiagConvergenceReport { theta, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagFloorReport {
    pub k: usize,
    pub threshold: usize,
    pub min_diag: f64,
    /// `1 / (2 n κ)`.
    pub floor: f64,
    pub holds: bool,
}

/// Checks `min_i [A^k]_ii ≥ 1/(2nκ)` for `k` at or beyond the threshold
/// `⌈(2 ln κ + 2 ln n)/(1 − β)⌉`.
pub fn check_diag_floor(a: &MixingMatrix, metrics: &NetworkMetrics, k: usize) -> Result<DiagFloorReport> {
    let threshold = metrics.diag_floor_threshold();
    if k < threshold || k == 0 {
        return Err(Error::Precondition(format!("k = {k} is below the diagonal-floor threshold {}", threshold.max(1))));
    }
    let power = matrix_power(a.entries(), k);
    let min_diag = (0..a.n()).map(|i| power[(i, i)]).fold(f64::INFINITY, f64::min);
    let floor = 1.0 / (2.0 * a.n() as f64 * metrics.kappa);
    Ok(DiagFloorReport { k, threshold, min_diag, floor, holds: min_diag >= floor })
}

/// Largest violation ratio of `‖A^k − A_∞‖₂ ≤ √κ β^k` over `k = 1..=k_max`
/// (values ≤ 1 mean the envelope holds), together with the first failing `k`.
pub fn power_envelope(a: &MixingMatrix, metrics: &NetworkMetrics, k_max: usize, tol: &Tolerances) -> (f64, Option<usize>) {
    let a_inf = limit_matrix(&metrics.pi);
    let mut power = a.entries().clone();
    let mut worst = 0.0_f64;
    let mut first_fail = None;
    for k in 1..=k_max {
        if k > 1 {
            power = &power * a.entries();
        }
        let measured = spectral_norm(&(&power - &a_inf), tol.norm_rel);
        let bound = metrics.kappa.sqrt() * metrics.beta.powi(k as i32);
        if bound > 0.0 {
            worst = worst.max(measured / bound);
        }
        // β carries a relative error of about norm_rel, which β^k amplifies k-fold.
        let slack = tol.bound_rel_slack + 2.0 * (k + 1) as f64 * tol.norm_rel;
        let holds = measured <= bound * (1.0 + slack) + tol.bound_abs_slack;
        if !holds && first_fail.is_none() {
            first_fail = Some(k);
        }
    }
    (worst, first_fail)
}

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::GradientOracle;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Sizes of the synthetic nonconvex logistic-regression problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub total_samples: usize,
    pub dim: usize,
    pub rho: f64,
    pub batch: usize,
    pub sigma_h: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { total_samples: 12_800, dim: 10, rho: 0.01, batch: 50, sigma_h: 10.0 }
    }
}

impl LogisticConfig {
    pub fn build(&self, n: usize, seed: u64) -> Result<SyntheticLogistic> {
        make_synthetic_logistic(n, self.total_samples, self.dim, self.rho, self.batch, self.sigma_h, seed)
    }
}

/// Logistic loss with a nonconvex regularizer over a planted dataset, split
/// evenly across nodes:
///
/// `f_i(x) = (1/M) Σ_l ln(1 + exp(−y_l h_lᵀx)) + ρ Σ_j x_j²/(1 + x_j²)`.
#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    n: usize,
    per_node: usize,
    rho: f64,
    batch: usize,
    features: DMatrix<f64>,
    labels: Vec<f64>,
    x_opt: Vec<f64>,
    local_starts: DMatrix<f64>,
}

/// Generates `x_opt ~ N(0, I)`, Gaussian features, labels `+1` iff
/// `z_l < 1/(1 + exp(−h_lᵀx_opt))` with `z_l` uniform, and local points
/// `x_opt + ε_i`, `ε_i ~ N(0, σ_h² I)`, in that order from one seeded stream.
pub fn make_synthetic_logistic(
    n: usize,
    total_samples: usize,
    d: usize,
    rho: f64,
    batch: usize,
    sigma_h: f64,
    seed: u64,
) -> Result<SyntheticLogistic> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidSize("logistic problem needs n ≥ 1 and d ≥ 1".into()));
    }
    if total_samples % n != 0 || total_samples == 0 {
        return Err(Error::InvalidParameter(format!("{total_samples} samples cannot be split evenly over {n} nodes")));
    }
    let per_node = total_samples / n;
    if batch == 0 || batch > per_node {
        return Err(Error::InvalidParameter(format!("batch {batch} must lie in 1..={per_node}")));
    }
    if !(rho >= 0.0) || !(sigma_h >= 0.0) {
        return Err(Error::InvalidParameter("rho and sigma_h must be non-negative".into()));
    }
    let mut rng = rng::seeded(seed);
    let x_opt: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let raw: Vec<f64> = (0..total_samples * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let features = DMatrix::from_row_slice(total_samples, d, &raw);
    let labels = (0..total_samples)
        .map(|l| {
            let z: f64 = rng.random();
            let margin: f64 = (0..d).map(|c| features[(l, c)] * x_opt[c]).sum();
            if z < 1.0 / (1.0 + (-margin).exp()) { 1.0 } else { -1.0 }
        })
        .collect();
    let perturb = Normal::new(0.0, sigma_h).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let local_starts = DMatrix::from_fn(n, d, |_, c| x_opt[c] + perturb.sample(&mut rng));
    Ok(SyntheticLogistic { n, per_node, rho, batch, features, labels, x_opt, local_starts })
}

/// `1/(1 + eᵗ)` without overflow.
fn logistic_weight(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// `ln(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl SyntheticLogistic {
    pub fn per_node(&self) -> usize {
        self.per_node
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    /// Perturbed local points `x_opt + ε_i`, one row per node.
    pub fn local_starts(&self) -> &DMatrix<f64> {
        &self.local_starts
    }

    /// CSV with header `node,label,h0,…`, one line per sample.
    pub fn to_csv(&self) -> String {
        let d = self.features.ncols();
        let mut out = String::from("node,label");
        for c in 0..d {
            let _ = write!(out, ",h{c}");
        }
        out.push('\n');
        for l in 0..self.labels.len() {
            let _ = write!(out, "{},{}", l / self.per_node, self.labels[l]);
            for c in 0..d {
                let _ = write!(out, ",{:.17e}", self.features[(l, c)]);
            }
            out.push('\n');
        }
        out
    }

    fn margin(&self, l: usize, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(c, v)| self.features[(l, c)] * v).sum()
    }

    /// Gradient over the given global sample indices plus the regularizer.
    fn gradient_over(&self, samples: impl Iterator<Item = usize>, count: usize, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for l in samples {
            let y = self.labels[l];
            let w = y * logistic_weight(y * self.margin(l, x));
            for (c, o) in out.iter_mut().enumerate() {
                *o -= w * self.features[(l, c)];
            }
        }
        let scale = 1.0 / count as f64;
        for (o, v) in out.iter_mut().zip(x) {
            *o = *o * scale + self.rho * 2.0 * v / (1.0 + v * v).powi(2);
        }
    }
}

impl GradientOracle for SyntheticLogistic {
    fn nodes(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn noise_level(&self) -> Option<f64> {
        None
    }

    fn local_gradient(&self, node: usize, x: &[f64], out: &mut [f64]) {
        let start = node * self.per_node;
        self.gradient_over(start..start + self.per_node, self.per_node, x, out);
    }

    /// Minibatch drawn uniformly without replacement and summed in index
    /// order, so a full batch reproduces the exact gradient bit for bit.
    fn stochastic_gradient(&self, node: usize, x: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        let start = node * self.per_node;
        let mut picks = index::sample(rng, self.per_node, self.batch).into_vec();
        picks.sort_unstable();
        self.gradient_over(picks.into_iter().map(|k| start + k), self.batch, x, out);
    }

    fn local_value(&self, node: usize, x: &[f64]) -> Option<f64> {
        let start = node * self.per_node;
        let loss: f64 = (start..start + self.per_node)
            .map(|l| softplus(-self.labels[l] * self.margin(l, x)))
            .sum::<f64>()
            / self.per_node as f64;
        let reg: f64 = x.iter().map(|v| v * v / (1.0 + v * v)).sum();
        Some(loss + self.rho * reg)
    }
}

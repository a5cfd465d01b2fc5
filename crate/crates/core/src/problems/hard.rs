//! Zero-chain hard instances built from the chain function
//!
//! `h(x) = −ψ(1)φ(x₁) + Σ_{j=1}^{d−1} [ψ(−x_j)φ(−x_{j+1}) − ψ(x_j)φ(x_{j+1})]`
//!
//! with `ψ(z) = exp(1 − 1/(2z−1)²)` for `z > ½` (zero otherwise) and
//! `φ(z) = √e ∫_{−∞}^z e^{−t²/2} dt`. Coordinates are 1-based in the maths
//! and 0-based in slices.

use super::GradientOracle;
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const L0: f64 = 152.0;
pub const G_INF: f64 = 23.0;
pub const DELTA0: f64 = 12.0;

const SQRT_E: f64 = 1.648_721_270_700_128_2;

pub fn psi(z: f64) -> f64 {
    if z <= 0.5 {
        0.0
    } else {
        (1.0 - 1.0 / (2.0 * z - 1.0).powi(2)).exp()
    }
}

pub fn psi_prime(z: f64) -> f64 {
    let p = psi(z);
    if p == 0.0 {
        0.0
    } else {
        4.0 * p / (2.0 * z - 1.0).powi(3)
    }
}

pub fn phi(z: f64) -> f64 {
    SQRT_E * (std::f64::consts::PI / 2.0).sqrt() * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn phi_prime(z: f64) -> f64 {
    SQRT_E * (-0.5 * z * z).exp()
}

/// Largest 1-based index of a nonzero coordinate, 0 for the zero vector.
pub fn prog(x: &[f64]) -> usize {
    x.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1)
}

#[derive(Clone, Copy)]
enum Part {
    Full,
    /// `h₁`: twice the head plus the links with even `j`.
    Even,
    /// `h₂`: twice the links with odd `j`.
    Odd,
}

impl Part {
    fn head_weight(self) -> f64 {
        match self {
            Part::Full => 1.0,
            Part::Even => 2.0,
            Part::Odd => 0.0,
        }
    }

    /// Weight of link `j` (1-based).
    fn link_weight(self, j: usize) -> f64 {
        match self {
            Part::Full => 1.0,
            Part::Even if j % 2 == 0 => 2.0,
            Part::Odd if j % 2 == 1 => 2.0,
            _ => 0.0,
        }
    }
}

fn chain_value(x: &[f64], part: Part) -> f64 {
    let mut total = 0.0;
    let hw = part.head_weight();
    if hw != 0.0 {
        total -= hw * psi(1.0) * phi(x[0]);
    }
    for j in 1..x.len() {
        let w = part.link_weight(j);
        if w == 0.0 {
            continue;
        }
        let (a, b) = (x[j - 1], x[j]);
        total += w * (psi(-a) * phi(-b) - psi(a) * phi(b));
    }
    total
}

fn chain_gradient(x: &[f64], part: Part, out: &mut [f64]) {
    out.fill(0.0);
    let hw = part.head_weight();
    if hw != 0.0 {
        out[0] -= hw * psi(1.0) * phi_prime(x[0]);
    }
    for j in 1..x.len() {
        let w = part.link_weight(j);
        if w == 0.0 {
            continue;
        }
        let (a, b) = (x[j - 1], x[j]);
        out[j - 1] -= w * (psi_prime(-a) * phi(-b) + psi_prime(a) * phi(b));
        out[j] -= w * (psi(-a) * phi_prime(-b) + psi(a) * phi_prime(b));
    }
}

pub fn h_value(x: &[f64]) -> f64 {
    chain_value(x, Part::Full)
}

pub fn h1_value(x: &[f64]) -> f64 {
    chain_value(x, Part::Even)
}

pub fn h2_value(x: &[f64]) -> f64 {
    chain_value(x, Part::Odd)
}

pub fn h_gradient(x: &[f64], out: &mut [f64]) {
    chain_gradient(x, Part::Full, out)
}

pub fn h1_gradient(x: &[f64], out: &mut [f64]) {
    chain_gradient(x, Part::Even, out)
}

pub fn h2_gradient(x: &[f64], out: &mut [f64]) {
    chain_gradient(x, Part::Odd, out)
}

/// Noise-free instance: the first `n/3` nodes hold `Lλ² h₁(x/λ)/L₀`, the last
/// `n/3` hold `Lλ² h₂(x/λ)/L₀` and the middle third holds zero, so that
/// `f = 2Lλ² h(x/λ)/(3L₀)`.
#[derive(Debug, Clone)]
pub struct HardInstance {
    n: usize,
    d: usize,
    smoothness: f64,
    lambda: f64,
}

pub fn make_hard_instance(n: usize, d: usize, smoothness: f64, lambda: f64) -> Result<HardInstance> {
    if n == 0 || n % 3 != 0 {
        return Err(Error::InvalidSize(format!("hard instance needs n divisible by 3, got {n}")));
    }
    if d < 2 {
        return Err(Error::InvalidSize(format!("hard instance needs d ≥ 2, got {d}")));
    }
    if !(smoothness > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter("L and lambda must be positive".into()));
    }
    Ok(HardInstance { n, d, smoothness, lambda })
}

impl HardInstance {
    fn part(&self, node: usize) -> Option<Part> {
        let third = self.n / 3;
        if node < third {
            Some(Part::Even)
        } else if node >= self.n - third {
            Some(Part::Odd)
        } else {
            None
        }
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v / self.lambda).collect()
    }
}

impl GradientOracle for HardInstance {
    fn nodes(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_level(&self) -> Option<f64> {
        Some(0.0)
    }

    fn local_gradient(&self, node: usize, x: &[f64], out: &mut [f64]) {
        match self.part(node) {
            None => out.fill(0.0),
            Some(part) => {
                chain_gradient(&self.scaled(x), part, out);
                let s = self.smoothness * self.lambda / L0;
                out.iter_mut().for_each(|o| *o *= s);
            }
        }
    }

    fn stochastic_gradient(&self, node: usize, x: &[f64], _rng: &mut SimRng, out: &mut [f64]) {
        self.local_gradient(node, x, out)
    }

    fn local_value(&self, node: usize, x: &[f64]) -> Option<f64> {
        Some(match self.part(node) {
            None => 0.0,
            Some(part) => self.smoothness * self.lambda.powi(2) * chain_value(&self.scaled(x), part) / L0,
        })
    }
}

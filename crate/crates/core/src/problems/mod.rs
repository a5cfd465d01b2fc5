//! Gradient oracles.
//!
//! An oracle owns `n` local objectives `f_i : ℝ^d → ℝ` and serves exact
//! gradients `∇f_i` plus unbiased stochastic gradients drawn from a
//! caller-supplied generator. Oracles are immutable after construction.

mod hard;
mod logistic;
mod noisy;
mod quadratic;

use std::sync::Arc;

use crate::rng::SimRng;

pub use hard::{h1_gradient, h1_value, h2_gradient, h2_value, h_gradient, h_value, make_hard_instance, phi, phi_prime, prog, psi, psi_prime, HardInstance, DELTA0, G_INF, L0};
pub use logistic::{make_synthetic_logistic, LogisticConfig, SyntheticLogistic};
pub use noisy::{noisy, Noisy};
pub use quadratic::{make_quadratic, Quadratic};

pub trait GradientOracle: Send + Sync {
    fn nodes(&self) -> usize;

    fn dim(&self) -> usize;

    /// Bound `σ` on the trace of each node's gradient-noise covariance, when
    /// known in closed form.
    fn noise_level(&self) -> Option<f64>;

    /// Writes `∇f_i(x)` into `out`.
    fn local_gradient(&self, node: usize, x: &[f64], out: &mut [f64]);

    /// Writes one stochastic gradient of `f_i` at `x` into `out`.
    fn stochastic_gradient(&self, node: usize, x: &[f64], rng: &mut SimRng, out: &mut [f64]);

    fn local_value(&self, _node: usize, _x: &[f64]) -> Option<f64> {
        None
    }

    /// `f(x) = (1/n) Σ_i f_i(x)`.
    fn objective(&self, x: &[f64]) -> Option<f64> {
        let n = self.nodes();
        let mut total = 0.0;
        for i in 0..n {
            total += self.local_value(i, x)?;
        }
        Some(total / n as f64)
    }

    /// `inf f`, when known.
    fn minimum(&self) -> Option<f64> {
        None
    }
}

macro_rules! forward_oracle {
    ($ty:ty) => {
        impl<T: GradientOracle + ?Sized> GradientOracle for $ty {
            fn nodes(&self) -> usize {
                (**self).nodes()
            }
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn noise_level(&self) -> Option<f64> {
                (**self).noise_level()
            }
            fn local_gradient(&self, node: usize, x: &[f64], out: &mut [f64]) {
                (**self).local_gradient(node, x, out)
            }
            fn stochastic_gradient(&self, node: usize, x: &[f64], rng: &mut SimRng, out: &mut [f64]) {
                (**self).stochastic_gradient(node, x, rng, out)
            }
            fn local_value(&self, node: usize, x: &[f64]) -> Option<f64> {
                (**self).local_value(node, x)
            }
            fn objective(&self, x: &[f64]) -> Option<f64> {
                (**self).objective(x)
            }
            fn minimum(&self) -> Option<f64> {
                (**self).minimum()
            }
        }
    };
}

forward_oracle!(Box<T>);
forward_oracle!(Arc<T>);
forward_oracle!(&T);

/// `(1/n) Σ_i ∇f_i(x)`.
pub fn global_gradient<O: GradientOracle + ?Sized>(oracle: &O, x: &[f64]) -> Vec<f64> {
    let n = oracle.nodes();
    let mut total = vec![0.0; oracle.dim()];
    let mut buf = vec![0.0; oracle.dim()];
    for i in 0..n {
        oracle.local_gradient(i, x, &mut buf);
        total.iter_mut().zip(&buf).for_each(|(t, b)| *t += b);
    }
    total.iter_mut().for_each(|t| *t /= n as f64);
    total
}

use rand_distr::{Distribution, Normal};

use super::GradientOracle;
use crate::rng::SimRng;

/// Adds `N(0, σ²/d · I)` to every stochastic gradient of the wrapped oracle,
/// so the added noise has covariance trace `σ²`.
#[derive(Debug, Clone)]
pub struct Noisy<O> {
    inner: O,
    sigma: f64,
}

/// Panics if `sigma` is negative or not finite.
pub fn noisy<O: GradientOracle>(inner: O, sigma: f64) -> Noisy<O> {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be a non-negative number");
    Noisy { inner, sigma }
}

impl<O> Noisy<O> {
    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl<O: GradientOracle> GradientOracle for Noisy<O> {
    fn nodes(&self) -> usize {
        self.inner.nodes()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn noise_level(&self) -> Option<f64> {
        self.inner.noise_level().map(|s| s.hypot(self.sigma))
    }

    fn local_gradient(&self, node: usize, x: &[f64], out: &mut [f64]) {
        self.inner.local_gradient(node, x, out)
    }

    fn stochastic_gradient(&self, node: usize, x: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        self.inner.stochastic_gradient(node, x, rng, out);
        if self.sigma == 0.0 {
            return;
        }
        let dist = Normal::new(0.0, self.sigma / (out.len() as f64).sqrt()).expect("finite scale");
        for o in out.iter_mut() {
            *o += dist.sample(rng);
        }
    }

    fn local_value(&self, node: usize, x: &[f64]) -> Option<f64> {
        self.inner.local_value(node, x)
    }

    fn objective(&self, x: &[f64]) -> Option<f64> {
        self.inner.objective(x)
    }

    fn minimum(&self) -> Option<f64> {
        self.inner.minimum()
    }
}

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::GradientOracle;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// `f_i(x) = ½‖x − c_i‖²`, noise-free.
#[derive(Debug, Clone)]
pub struct Quadratic {
    centers: DMatrix<f64>,
}

/// Centers `c_i ~ spread · N(0, I_d)`.
pub fn make_quadratic(n: usize, d: usize, spread: f64, seed: u64) -> Result<Quadratic> {
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::InvalidParameter(format!("spread must be non-negative, got {spread}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidSize("quadratic needs n ≥ 1 and d ≥ 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let centers = DMatrix::from_fn(n, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        spread * z
    });
    Ok(Quadratic { centers })
}

impl Quadratic {
    pub fn with_centers(centers: DMatrix<f64>) -> Self {
        Self { centers }
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn minimizer(&self) -> Vec<f64> {
        crate::gossip::column_mean(&self.centers)
    }
}

impl GradientOracle for Quadratic {
    fn nodes(&self) -> usize {
        self.centers.nrows()
    }

    fn dim(&self) -> usize {
        self.centers.ncols()
    }

    fn noise_level(&self) -> Option<f64> {
        Some(0.0)
    }

    fn local_gradient(&self, node: usize, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = x[c] - self.centers[(node, c)];
        }
    }

    fn stochastic_gradient(&self, node: usize, x: &[f64], _rng: &mut SimRng, out: &mut [f64]) {
        self.local_gradient(node, x, out)
    }

    fn local_value(&self, node: usize, x: &[f64]) -> Option<f64> {
        Some(0.5 * x.iter().enumerate().map(|(c, v)| (v - self.centers[(node, c)]).powi(2)).sum::<f64>())
    }

    fn minimum(&self) -> Option<f64> {
        self.objective(&self.minimizer())
    }
}

//! The A-protocol, multi-round gossip and Pull-Diag average correction.
//!
//! Every step is computed row by row from the in-neighbor lists of the mixing
//! matrix, so node `i` only ever reads rows `j` with `a_ij > 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::topology::MixingMatrix;

pub const DEFAULT_DIAG_FLOOR: f64 = 1e-14;

/// Node-stacked values: row `i` is node `i`'s local vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    values: DMatrix<f64>,
}

impl StackedState {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("stacked state has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { values: DMatrix::zeros(n, d) }
    }

    pub fn from_row_slice(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Shape(format!("{} values for a {n}x{d} state", data.len())));
        }
        Self::new(DMatrix::from_row_slice(n, d, data))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// `(1/n) 1ᵀz`.
    pub fn mean(&self) -> Vec<f64> {
        column_mean(&self.values)
    }
}

pub(crate) fn column_mean(z: &DMatrix<f64>) -> Vec<f64> {
    let n = z.nrows() as f64;
    z.column_iter().map(|c| c.sum() / n).collect()
}

fn check_rows(a: &MixingMatrix, z: &DMatrix<f64>) -> Result<()> {
    if z.nrows() != a.n() {
        return Err(Error::Shape(format!("state has {} rows, matrix has {}", z.nrows(), a.n())));
    }
    Ok(())
}

/// `out ← A src`, reading only the in-neighbor rows of each node.
pub fn mix_into(a: &MixingMatrix, src: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    debug_assert_eq!(src.shape(), out.shape());
    out.fill(0.0);
    for i in 0..a.n() {
        for &(j, w) in a.row_support(i) {
            debug_assert!(w > 0.0, "read a zero weight a[{i}][{j}]");
            for c in 0..src.ncols() {
                out[(i, c)] += w * src[(j, c)];
            }
        }
    }
}

/// `R` sequential applications of `A`, in place. `scratch` must match `z`.
pub fn mix_rounds(a: &MixingMatrix, z: &mut DMatrix<f64>, scratch: &mut DMatrix<f64>, rounds: usize) {
    for _ in 0..rounds {
        mix_into(a, z, scratch);
        std::mem::swap(z, scratch);
    }
}

/// One round of partial averaging, `Az`.
pub fn a_step(a: &MixingMatrix, z: &StackedState) -> Result<StackedState> {
    check_rows(a, &z.values)?;
    let mut out = DMatrix::zeros(z.n(), z.d());
    mix_into(a, &z.values, &mut out);
    Ok(StackedState { values: out })
}

/// `A^R z` by `R` sequential rounds.
pub fn multi_gossip(a: &MixingMatrix, z: &StackedState, rounds: usize) -> Result<StackedState> {
    check_rows(a, &z.values)?;
    let mut values = z.values.clone();
    let mut scratch = DMatrix::zeros(z.n(), z.d());
    mix_rounds(a, &mut values, &mut scratch, rounds);
    Ok(StackedState { values })
}

/// Pull-Diag average with the default diagonal floor.
pub fn pull_diag_average(a: &MixingMatrix, z: &StackedState, rounds: usize) -> Result<StackedState> {
    pull_diag_average_with_floor(a, z, rounds, DEFAULT_DIAG_FLOOR)
}

/// Two-phase Pull-Diag: `K` rounds on `v` (starting from basis rows), the
/// local rescale `z_i ← z_i / (n v_ii)`, then `K` rounds on `z`. The output
/// tends to `1 (1ᵀz/n)` as `K` grows.
pub fn pull_diag_average_with_floor(
    a: &MixingMatrix,
    z: &StackedState,
    rounds: usize,
    diag_floor: f64,
) -> Result<StackedState> {
    check_rows(a, &z.values)?;
    if rounds == 0 {
        return Err(Error::InvalidParameter("Pull-Diag needs at least one round".into()));
    }
    let n = a.n();
    let diag = diagonal_after(a, rounds)?;
    if let Some((node, &value)) = diag.iter().enumerate().find(|(_, &v)| v <= diag_floor) {
        return Err(Error::SmallDiagonal { node, rounds, value });
    }
    let mut values = z.values.clone();
    for (i, d) in diag.iter().enumerate() {
        values.row_mut(i).scale_mut(1.0 / (n as f64 * d));
    }
    let mut scratch = DMatrix::zeros(n, z.d());
    mix_rounds(a, &mut values, &mut scratch, rounds);
    Ok(StackedState { values })
}

/// `[v_i]_i` after `K` rounds of `v ← Av` from `v = I`.
fn diagonal_after(a: &MixingMatrix, rounds: usize) -> Result<Vec<f64>> {
    let n = a.n();
    let mut v = DMatrix::identity(n, n);
    let mut scratch = DMatrix::zeros(n, n);
    mix_rounds(a, &mut v, &mut scratch, rounds);
    Ok((0..n).map(|i| v[(i, i)]).collect())
}

/// Interleaved Pull-Diag: `z⁽ᵏ⁾ = A^k Diag(n A^k)^{-1} z` for `k = 1..=K`,
/// with `v` advanced once per round alongside.
pub fn interleaved_trajectory(a: &MixingMatrix, z: &StackedState, rounds: usize) -> Result<Vec<StackedState>> {
    check_rows(a, &z.values)?;
    let n = a.n();
    let mut v = DMatrix::identity(n, n);
    let mut v_scratch = DMatrix::zeros(n, n);
    let mut scratch = DMatrix::zeros(n, z.d());
    let mut out = Vec::with_capacity(rounds);
    for k in 1..=rounds {
        mix_rounds(a, &mut v, &mut v_scratch, 1);
        let mut values = z.values.clone();
        for i in 0..n {
            let d = v[(i, i)];
            if d <= DEFAULT_DIAG_FLOOR {
                return Err(Error::SmallDiagonal { node: i, rounds: k, value: d });
            }
            values.row_mut(i).scale_mut(1.0 / (n as f64 * d));
        }
        mix_rounds(a, &mut values, &mut scratch, k);
        out.push(StackedState { values });
    }
    Ok(out)
}

/// `‖z − 1 referenceᵀ‖_F`.
pub fn consensus_error(z: &StackedState, reference: &[f64]) -> Result<f64> {
    if reference.len() != z.d() {
        return Err(Error::Shape(format!("reference of length {} for {} columns", reference.len(), z.d())));
    }
    let mut total = 0.0;
    for i in 0..z.n() {
        for (c, r) in reference.iter().enumerate() {
            total += (z.values[(i, c)] - r).powi(2);
        }
    }
    Ok(total.sqrt())
}

/// `πᵀz`.
pub fn weighted_centroid(z: &DMatrix<f64>, pi: &[f64]) -> Vec<f64> {
    (0..z.ncols())
        .map(|c| pi.iter().enumerate().map(|(i, p)| p * z[(i, c)]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_exponential, weights_from_indegree};

    fn mat(rows: usize, data: &[f64]) -> MixingMatrix {
        MixingMatrix::new(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    #[test]
    fn hand_multiplied_step() {
        let a = MixingMatrix::row_stochastic(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0])).unwrap();
        let z = StackedState::from_row_slice(2, 1, &[2.0, 0.0]).unwrap();
        assert_eq!(a_step(&a, &z).unwrap().row(0), vec![1.0]);
        assert_eq!(a_step(&a, &z).unwrap().row(1), vec![0.0]);
    }

    #[test]
    fn averaging_matrix_gives_mean_in_one_round() {
        let a = mat(3, &[1.0 / 3.0; 9]);
        let z = StackedState::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 6.0, 0.0, 3.0]).unwrap();
        let out = pull_diag_average(&a, &z, 1).unwrap();
        for i in 0..3 {
            for (x, e) in out.row(i).iter().zip([1.0, 3.0]) {
                assert!((x - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_rounds_and_shape_errors() {
        let a = weights_from_indegree(&build_exponential(4).unwrap()).unwrap();
        let z = StackedState::zeros(4, 1);
        assert_eq!(multi_gossip(&a, &z, 0).unwrap(), z);
        assert!(matches!(pull_diag_average(&a, &z, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(a_step(&a, &StackedState::zeros(3, 1)), Err(Error::Shape(_))));
        assert!(matches!(consensus_error(&z, &[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn consensus_error_by_hand() {
        let z = StackedState::from_row_slice(2, 1, &[1.0, 0.0]).unwrap();
        assert!((consensus_error(&z, &[0.5]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn small_diagonal_is_an_error() {
        let a = weights_from_indegree(&build_exponential(4).unwrap()).unwrap();
        let z = StackedState::zeros(4, 1);
        let err = pull_diag_average_with_floor(&a, &z, 2, 0.9).unwrap_err();
        assert!(matches!(err, Error::SmallDiagonal { rounds: 2, .. }));
    }
}

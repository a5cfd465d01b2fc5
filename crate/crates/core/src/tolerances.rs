//! Numerical tolerances shared across the crate.
//!
//! The defaults are the values the verifiers and probes are calibrated
//! against; the harness can override them from its config file.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance on each row sum of a mixing matrix.
    pub row_sum: f64,
    /// Residual `‖πᵀA − πᵀ‖_∞` at which the Perron solver stops.
    pub perron: f64,
    /// Tighter Perron residual used for optimizer invariant probes.
    pub perron_probe: f64,
    /// Relative tolerance of the Gram power iteration for spectral norms.
    pub norm_rel: f64,
    /// Diagonal estimates at or below this value are a hard error.
    pub diag_floor: f64,
    /// Relative tolerance for the centroid recursion probe.
    pub centroid_probe: f64,
    /// Relative tolerance for the tracker identity probe.
    pub tracker_probe: f64,
    /// Relative slack when comparing a measured quantity against a bound.
    pub bound_rel_slack: f64,
    /// Absolute slack for bounds that collapse to zero (rounding floor).
    pub bound_abs_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            row_sum: 1e-12,
            perron: 1e-12,
            perron_probe: 1e-15,
            norm_rel: 1e-10,
            diag_floor: 1e-14,
            centroid_probe: 1e-10,
            tracker_probe: 1e-8,
            bound_rel_slack: 1e-9,
            bound_abs_slack: 1e-12,
        }
    }
}

impl Tolerances {
    /// `measured ≤ bound` up to the configured slack.
    pub fn within(&self, measured: f64, bound: f64) -> bool {
        measured <= bound * (1.0 + self.bound_rel_slack) + self.bound_abs_slack
    }
}

//! Experiment configuration.
//!
//! Files are TOML with the sections `[experiment]`, `[topology]`,
//! `[algorithm]`, `[consensus]`, `[problem]`, `[run]` and `[tolerances]`.
//! Every key is optional; absent keys take the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rowgossip_core::problems::{make_hard_instance, make_quadratic, noisy, LogisticConfig};
use rowgossip_core::topology::{
    build_directed_ring, build_exponential, build_geometric, build_grid, build_nearest_neighbor, weights_from_indegree,
};
use rowgossip_core::{GradientOracle, MixingMatrix, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

pub const SEED_ENV: &str = "ROWGOSSIP_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub topology: TopologySpec,
    pub algorithm: AlgorithmSpec,
    pub consensus: ConsensusSpec,
    pub problem: ProblemSpec,
    pub run: RunSection,
    pub tolerances: ToleranceOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Consensus,
    Speedup,
    MgCompare,
    #[default]
    Metrics,
    Invariants,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    #[default]
    Exp,
    Ring,
    Grid,
    Geometric,
    Nearest,
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exp" | "exponential" => Ok(Self::Exp),
            "ring" => Ok(Self::Ring),
            "grid" => Ok(Self::Grid),
            "geometric" => Ok(Self::Geometric),
            "nearest" | "nn" => Ok(Self::Nearest),
            other => Err(format!("unknown topology '{other}' (exp, ring, grid, geometric, nearest)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n: usize,
    /// Grid shape; a square grid of side `√n` when absent.
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub radius: f64,
    /// Neighbours per node for the nearest-neighbour graph.
    pub k: usize,
    pub seed: u64,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self { kind: TopologyKind::Exp, n: 8, rows: None, cols: None, radius: 0.5, k: 3, seed: 0 }
    }
}

impl TopologySpec {
    pub fn build(&self) -> HarnessResult<MixingMatrix> {
        self.build_with(self.n)
    }

    /// Builds the same family with `n` nodes.
    pub fn build_with(&self, n: usize) -> HarnessResult<MixingMatrix> {
        let graph = match self.kind {
            TopologyKind::Exp => build_exponential(n)?,
            TopologyKind::Ring => build_directed_ring(n)?,
            TopologyKind::Grid => {
                let (rows, cols) = match (self.rows, self.cols) {
                    (Some(r), Some(c)) if r * c == n => (r, c),
                    (Some(r), Some(c)) => {
                        return Err(HarnessError::Config(format!("grid {r}x{c} does not have {n} nodes")));
                    }
                    _ => {
                        let side = (n as f64).sqrt().round() as usize;
                        if side * side != n {
                            return Err(HarnessError::Config(format!("grid needs rows and cols when n = {n}")));
                        }
                        (side, side)
                    }
                };
                build_grid(rows, cols)?
            }
            TopologyKind::Geometric => build_geometric(n, self.radius, self.seed)?,
            TopologyKind::Nearest => build_nearest_neighbor(n, self.k.min(n.saturating_sub(1)), self.seed)?,
        };
        Ok(weights_from_indegree(&graph)?)
    }
}

/// Gossip rounds per iteration: a count, or `auto` for the recommended value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRounds", into = "RawRounds")]
pub enum Rounds {
    Fixed(usize),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawRounds {
    Count(usize),
    Word(String),
}

impl TryFrom<RawRounds> for Rounds {
    type Error = String;

    fn try_from(raw: RawRounds) -> Result<Self, String> {
        match raw {
            RawRounds::Count(0) => Err("R must be at least 1".into()),
            RawRounds::Count(r) => Ok(Rounds::Fixed(r)),
            RawRounds::Word(w) => w.parse(),
        }
    }
}

impl From<Rounds> for RawRounds {
    fn from(r: Rounds) -> Self {
        match r {
            Rounds::Fixed(r) => RawRounds::Count(r),
            Rounds::Auto => RawRounds::Word("auto".into()),
        }
    }
}

impl FromStr for Rounds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(Rounds::Auto),
            t => match t.parse::<usize>() {
                Ok(0) => Err("R must be at least 1".into()),
                Ok(r) => Ok(Rounds::Fixed(r)),
                Err(_) => Err(format!("invalid R '{t}' (a positive integer or 'auto')")),
            },
        }
    }
}

impl fmt::Display for Rounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rounds::Fixed(r) => write!(f, "{r}"),
            Rounds::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// Fixed step size. Takes precedence over `n_alpha`.
    pub alpha: Option<f64>,
    /// Step size as `n·α`, so that `α = n_alpha / n`.
    pub n_alpha: Option<f64>,
    pub rounds: Vec<Rounds>,
    /// One step size per entry of `rounds`; overrides `alpha`/`n_alpha`.
    pub alphas: Option<Vec<f64>>,
    /// Total communication rounds `K`.
    pub comm_budget: usize,
    /// Log spacing in communication rounds; `0` picks about 200 rows.
    pub log_rounds: usize,
    pub probes: bool,
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        Self {
            alpha: None,
            n_alpha: Some(0.512),
            rounds: vec![Rounds::Fixed(1)],
            alphas: None,
            comm_budget: 20_000,
            log_rounds: 0,
            probes: false,
        }
    }
}

impl AlgorithmSpec {
    /// Step size for an `n`-node network.
    pub fn step_size(&self, n: usize) -> HarnessResult<f64> {
        match (self.alpha, self.n_alpha) {
            (Some(a), _) => Ok(a),
            (None, Some(na)) => Ok(na / n as f64),
            (None, None) => Err(HarnessError::Config("set algorithm.alpha or algorithm.n_alpha".into())),
        }
    }

    /// Step size for the `index`-th entry of `rounds`.
    pub fn step_size_for(&self, index: usize, n: usize) -> HarnessResult<f64> {
        match &self.alphas {
            Some(list) => list.get(index).copied().ok_or_else(|| {
                HarnessError::Config(format!("algorithm.alphas has {} entries for {} R values", list.len(), self.rounds.len()))
            }),
            None => self.step_size(n),
        }
    }

    pub fn log_spacing(&self) -> usize {
        if self.log_rounds > 0 {
            self.log_rounds
        } else {
            (self.comm_budget / 200).max(1)
        }
    }
}

/// Matrix families for the consensus sweep.
///
/// `beta_mix` entries `θ` give `θA + (1−θ)J/n`; `kappa_mix` entries `η` give
/// `(1−η)A + η·1sᵀ` with `s_j ∝ j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSpec {
    pub rounds: usize,
    pub dim: usize,
    pub beta_mix: Vec<f64>,
    pub kappa_mix: Vec<f64>,
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        Self { rounds: 40, dim: 4, beta_mix: vec![1.0, 0.8, 0.6, 0.4], kappa_mix: vec![0.1, 0.3, 0.5, 0.7] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    #[default]
    Logistic,
    Quadratic,
    Hard,
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "quadratic" => Ok(Self::Quadratic),
            "hard" => Ok(Self::Hard),
            other => Err(format!("unknown problem '{other}' (logistic, quadratic, hard)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub total_samples: usize,
    pub dim: usize,
    pub rho: f64,
    pub batch: usize,
    pub sigma_h: f64,
    /// Spread of the quadratic centers.
    pub spread: f64,
    pub smoothness: f64,
    pub lambda: f64,
    /// Standard deviation of the additive Gaussian gradient noise.
    pub sigma: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        let l = LogisticConfig::default();
        Self {
            kind: ProblemKind::Logistic,
            total_samples: l.total_samples,
            dim: l.dim,
            rho: l.rho,
            batch: l.batch,
            sigma_h: l.sigma_h,
            spread: 1.0,
            smoothness: 1.0,
            lambda: 1.0,
            sigma: 1.0,
        }
    }
}

impl ProblemSpec {
    pub fn build(&self, n: usize, seed: u64) -> HarnessResult<Box<dyn GradientOracle>> {
        let base: Box<dyn GradientOracle> = match self.kind {
            ProblemKind::Logistic => Box::new(
                LogisticConfig {
                    total_samples: self.total_samples,
                    dim: self.dim,
                    rho: self.rho,
                    batch: self.batch,
                    sigma_h: self.sigma_h,
                }
                .build(n, seed)?,
            ),
            ProblemKind::Quadratic => Box::new(make_quadratic(n, self.dim, self.spread, seed)?),
            ProblemKind::Hard => Box::new(make_hard_instance(n, self.dim, self.smoothness, self.lambda)?),
        };
        Ok(if self.sigma > 0.0 { Box::new(noisy(base, self.sigma)) } else { base })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub repetitions: usize,
    /// Base seed; falls back to `ROWGOSSIP_SEED`, then 0.
    pub seed: Option<u64>,
    pub nodes: Vec<usize>,
    pub output: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { repetitions: 1, seed: None, nodes: vec![1, 4, 16], output: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub row_sum: Option<f64>,
    pub perron: Option<f64>,
    pub perron_probe: Option<f64>,
    pub norm_rel: Option<f64>,
    pub diag_floor: Option<f64>,
    pub centroid_probe: Option<f64>,
    pub tracker_probe: Option<f64>,
    pub bound_rel_slack: Option<f64>,
    pub bound_abs_slack: Option<f64>,
}

impl ToleranceOverrides {
    pub fn resolve(&self) -> Tolerances {
        let mut t = Tolerances::default();
        let pairs = [
            (&mut t.row_sum, self.row_sum),
            (&mut t.perron, self.perron),
            (&mut t.perron_probe, self.perron_probe),
            (&mut t.norm_rel, self.norm_rel),
            (&mut t.diag_floor, self.diag_floor),
            (&mut t.centroid_probe, self.centroid_probe),
            (&mut t.tracker_probe, self.tracker_probe),
            (&mut t.bound_rel_slack, self.bound_rel_slack),
            (&mut t.bound_abs_slack, self.bound_abs_slack),
        ];
        for (slot, value) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
        t
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> HarnessResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Explicit seed, else `ROWGOSSIP_SEED`, else 0.
    pub fn base_seed(&self) -> HarnessResult<u64> {
        if let Some(s) = self.run.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| HarnessError::Config(format!("{SEED_ENV}='{v}' is not a u64"))),
            Err(_) => Ok(0),
        }
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.run.repetitions == 0 {
            return bad("run.repetitions must be at least 1".into());
        }
        if self.topology.n == 0 {
            return bad("topology.n must be at least 1".into());
        }
        for (name, v) in [("alpha", self.algorithm.alpha), ("n_alpha", self.algorithm.n_alpha)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("algorithm.{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(list) = &self.algorithm.alphas {
            if list.len() != self.algorithm.rounds.len() {
                return bad(format!("algorithm.alphas has {} entries for {} R values", list.len(), self.algorithm.rounds.len()));
            }
            if let Some(v) = list.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return bad(format!("step sizes must be positive, got {v}"));
            }
        }
        if self.algorithm.rounds.is_empty() {
            return bad("algorithm.rounds must not be empty".into());
        }
        if !(self.problem.sigma >= 0.0 && self.problem.sigma.is_finite()) {
            return bad(format!("problem.sigma must be non-negative, got {}", self.problem.sigma));
        }
        if self.run.nodes.iter().any(|&n| n == 0) {
            return bad("run.nodes entries must be at least 1".into());
        }
        if let Some(t) = self.consensus.beta_mix.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return bad(format!("consensus.beta_mix entries must lie in (0, 1], got {t}"));
        }
        if let Some(e) = self.consensus.kappa_mix.iter().find(|e| !(**e >= 0.0 && **e <= 1.0)) {
            return bad(format!("consensus.kappa_mix entries must lie in [0, 1], got {e}"));
        }
        Ok(())
    }
}

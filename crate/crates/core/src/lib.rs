//! Decentralized stochastic optimization over directed networks that only
//! know their in-degrees.
//!
//! Nodes mix with a row-stochastic matrix `A`. Gossip with such a matrix
//! converges to the Perron-weighted average `1 π_Aᵀ z` instead of the plain
//! mean, so the crate provides:
//!
//! * [`topology`]: graph generators and in-degree weighting,
//! * [`spectral`]: Perron vectors and the metrics `β_A`, `κ_A`, `θ_A`, `s_A`,
//!   plus numerical verifiers for the linear-algebra bounds used in the
//!   convergence analysis,
//! * [`gossip`]: the A-protocol, multi-round gossip and the Pull-Diag
//!   correction that recovers the true average,
//! * [`optim`]: Pull-Diag gradient tracking and its multi-gossip variant,
//! * [`problems`]: gradient oracles (quadratics, synthetic nonconvex logistic
//!   regression, zero-chain hard instances).
//!
//! All randomness flows through [`rng::SimRng`] (ChaCha8 seeded from a `u64`),
//! so every generator and every optimizer trajectory is a pure function of its
//! inputs and seed.

pub mod error;
pub mod gossip;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod spectral;
pub mod tolerances;
pub mod topology;

pub use error::{Error, Result};
pub use gossip::StackedState;
pub use optim::{Algorithm, GtState, Network, RunSpec, StepReport};
pub use problems::GradientOracle;
pub use spectral::NetworkMetrics;
pub use tolerances::Tolerances;
pub use topology::{DirectedGraph, MixingMatrix};

//! Experiment harness for the row-stochastic gossip simulator: configuration,
//! experiment drivers, the invariant suite and CSV/JSON output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod record;
pub mod suite;

pub use config::ExperimentConfig;
pub use error::{HarnessError, HarnessResult};
pub use experiments::{run_consensus_experiment, run_experiment, run_mg_compare, run_speedup_experiment, ExperimentOutput};
pub use record::{Row, RunRecord};
pub use suite::{run_invariant_suite, SuiteCase, SuiteReport};

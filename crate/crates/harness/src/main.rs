use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rowgossip::config::{ExperimentKind, ProblemKind, Rounds, TopologyKind};
use rowgossip::experiments::run_metrics;
use rowgossip::record::to_json;
use rowgossip::suite::default_cases;
use rowgossip::{run_experiment, run_invariant_suite, ExperimentConfig, HarnessError, HarnessResult, SuiteCase};
use rowgossip_core::topology::{parse_matrix_csv, MixingMatrix};

#[derive(Parser)]
#[command(name = "rowgossip", version, about = "Decentralized optimization over row-stochastic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print spectral metrics of a mixing matrix as JSON.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Read the matrix from a CSV export instead of building a topology.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Pull-Diag consensus sweep over matrix families.
    Consensus(Common),
    /// Noise-floor plateau against the number of nodes.
    Speedup(Common),
    /// Equal-budget comparison of gossip rounds per iteration.
    MgCompare(Common),
    /// Run the invariant suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Additional matrices (CSV export format) to include.
        #[arg(long)]
        matrix: Vec<PathBuf>,
    },
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<TopologyKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "n-alpha")]
    n_alpha: Option<f64>,
    /// Per-R step sizes, aligned with --R.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Total communication rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Gossip rounds per iteration, e.g. 1,5,auto.
    #[arg(long = "R", value_delimiter = ',')]
    r: Option<Vec<Rounds>>,
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    log_rounds: Option<usize>,
    #[arg(long)]
    probes: bool,
}

impl Common {
    fn resolve(&self, kind: ExperimentKind) -> HarnessResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.experiment.kind = kind;
        if let Some(v) = self.topology {
            cfg.topology.kind = v;
        }
        if let Some(v) = self.n {
            cfg.topology.n = v;
        }
        if self.seed.is_some() {
            cfg.run.seed = self.seed;
        }
        if self.output.is_some() {
            cfg.run.output = self.output.clone();
        }
        if let Some(v) = self.alpha {
            cfg.algorithm.alpha = Some(v);
        }
        if let Some(v) = self.n_alpha {
            cfg.algorithm.n_alpha = Some(v);
            cfg.algorithm.alpha = None;
        }
        if self.alphas.is_some() {
            cfg.algorithm.alphas = self.alphas.clone();
        }
        if let Some(v) = self.rounds {
            cfg.algorithm.comm_budget = v;
        }
        if let Some(v) = &self.r {
            cfg.algorithm.rounds = v.clone();
        }
        if let Some(v) = &self.nodes {
            cfg.run.nodes = v.clone();
        }
        if let Some(v) = self.sigma {
            cfg.problem.sigma = v;
        }
        if let Some(v) = self.repetitions {
            cfg.run.repetitions = v;
        }
        if let Some(v) = self.problem {
            cfg.problem.kind = v;
        }
        if let Some(v) = self.log_rounds {
            cfg.algorithm.log_rounds = v;
        }
        if self.probes {
            cfg.algorithm.probes = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Metrics { common, matrix, k_max } => {
            let cfg = common.resolve(ExperimentKind::Metrics)?;
            let a = match matrix {
                Some(path) => MixingMatrix::read_csv(path)?,
                None => cfg.topology.build()?,
            };
            print!("{}", to_json(&run_metrics(&a, k_max, &cfg.tolerances.resolve())?));
            Ok(())
        }
        Command::Verify { common, matrix } => {
            let cfg = common.resolve(ExperimentKind::Invariants)?;
            let mut cases = default_cases()?;
            for path in matrix {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
                cases.push(SuiteCase::new(path.display().to_string(), parse_matrix_csv(&text)?));
            }
            let report = run_invariant_suite(&cases, &cfg.tolerances.resolve());
            let text = to_json(&report);
            if let Some(dir) = &cfg.run.output {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("summary.json"), &text)?;
            }
            print!("{text}");
            if report.passed {
                Ok(())
            } else {
                Err(HarnessError::Invariant(format!("failed cases: {}", report.failed_cases().join(", "))))
            }
        }
        Command::Consensus(common) => experiment(common, ExperimentKind::Consensus),
        Command::Speedup(common) => experiment(common, ExperimentKind::Speedup),
        Command::MgCompare(common) => experiment(common, ExperimentKind::MgCompare),
    }
}

fn experiment(common: Common, kind: ExperimentKind) -> HarnessResult<()> {
    let cfg = common.resolve(kind)?;
    let out = run_experiment(&cfg)?;
    if let Some(dir) = &cfg.run.output {
        out.write(dir)?;
    }
    print!("{}", to_json(&out.summary));
    out.failure().map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rowgossip: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

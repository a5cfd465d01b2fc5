//! Run records and their CSV/JSON serialization.

use std::fmt::Write as _;
use std::path::Path;

use rowgossip_core::StepReport;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::HarnessResult;

pub const CSV_HEADER: &str = "comm_rounds,samples,grad_norm,consensus_err,descent_dev,objective";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub comm_rounds: usize,
    pub samples: usize,
    pub grad_norm: Option<f64>,
    pub consensus_err: f64,
    pub descent_dev: Option<f64>,
    pub objective: Option<f64>,
}

impl From<&StepReport> for Row {
    fn from(r: &StepReport) -> Self {
        Self {
            comm_rounds: r.comm_rounds,
            samples: r.samples,
            grad_norm: Some(r.grad_norm),
            consensus_err: r.consensus_error,
            descent_dev: Some(r.descent_deviation),
            objective: r.centroid_f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub final_grad_norm: Option<f64>,
    pub best_grad_norm: Option<f64>,
    pub final_consensus_err: Option<f64>,
    pub final_objective: Option<f64>,
    pub best_objective: Option<f64>,
    pub wall_seconds: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Summary {
    pub fn of(rows: &[Row], wall_seconds: f64) -> Self {
        let best = |f: fn(&Row) -> Option<f64>| rows.iter().filter_map(f).reduce(f64::min);
        let last = rows.last();
        Self {
            final_grad_norm: last.and_then(|r| r.grad_norm),
            best_grad_norm: best(|r| r.grad_norm),
            final_consensus_err: last.map(|r| r.consensus_err),
            final_objective: last.and_then(|r| r.objective),
            best_objective: best(|r| r.objective),
            wall_seconds,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub config: Value,
    #[serde(skip)]
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl RunRecord {
    pub fn new(name: impl Into<String>, config: Value, rows: Vec<Row>, wall_seconds: f64) -> Self {
        let summary = Summary::of(&rows, wall_seconds);
        Self { name: name.into(), config, rows, summary }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.comm_rounds,
                r.samples,
                opt(r.grad_norm),
                r.consensus_err,
                opt(r.descent_dev),
                opt(r.objective)
            );
        }
        out
    }

    /// Writes `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> HarnessResult<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.name)), self.to_csv())?;
        std::fs::write(dir.join(format!("{}.json", self.name)), to_json(self))?;
        Ok(())
    }
}

/// Element-wise mean of equally shaped row sets.
pub fn average_rows(runs: &[Vec<Row>]) -> Vec<Row> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let count = runs.len() as f64;
    let mean_opt = |f: &dyn Fn(&Row) -> Option<f64>, i: usize| -> Option<f64> {
        runs.iter().map(|r| f(&r[i])).sum::<Option<f64>>().map(|s| s / count)
    };
    (0..len)
        .map(|i| Row {
            comm_rounds: first[i].comm_rounds,
            samples: first[i].samples,
            grad_norm: mean_opt(&|r| r.grad_norm, i),
            consensus_err: runs.iter().map(|r| r[i].consensus_err).sum::<f64>() / count,
            descent_dev: mean_opt(&|r| r.descent_dev, i),
            objective: mean_opt(&|r| r.objective, i),
        })
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

//! CSV result files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::energy::ProblemInstance;
use crate::optimizer::{Solution, Strategy, TraceRow};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub strategy: String,
    /// Swept parameter name and value, empty for single runs.
    pub param: String,
    pub value: Option<f64>,
    pub k: usize,
    pub images: u64,
    pub feasible: bool,
    pub total_j: Option<f64>,
    pub j_per_image: Option<f64>,
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub violations: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationRow {
    pub scenario: String,
    pub strategy: String,
    pub value: Option<f64>,
    pub k: usize,
    /// Satellite index, or `g` for the direct-download share.
    pub n: String,
    pub x_bits: f64,
    pub f_hz: Option<f64>,
}

// Spelled out because the CSV writer cannot serialize flattened structs.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct TraceLine<'a> {
    scenario: &'a str,
    strategy: &'a str,
    value: Option<f64>,
    outer: usize,
    block: &'a str,
    round: usize,
    inner_iterations: usize,
    objective: f64,
    processing_residual: f64,
    downlink_residual: f64,
    isl_residual: f64,
}

/// One solved run ready for output.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub summary: SummaryRow,
    pub allocation: Vec<AllocationRow>,
    pub trace: Vec<TraceRow>,
}

impl RunRecord {
    pub fn new(
        scenario: &str,
        strategy: Strategy,
        param: Option<(&str, f64)>,
        problem: &ProblemInstance,
        solution: &Solution,
    ) -> Self {
        let plan = &solution.plan;
        let feasible = plan.feasible();
        let active: Vec<f64> = (0..problem.k())
            .filter(|&k| problem.demands[k] > 0.0)
            .map(|k| plan.rho[k])
            .collect();
        let (rho_min, rho_max) = if active.is_empty() || strategy == Strategy::Direct {
            (None, None)
        } else {
            (
                Some(active.iter().cloned().fold(f64::INFINITY, f64::min)),
                Some(active.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
            )
        };
        let value = param.map(|p| p.1);
        let summary = SummaryRow {
            scenario: scenario.into(),
            strategy: strategy.name().into(),
            param: param.map(|p| p.0.to_string()).unwrap_or_default(),
            value,
            k: problem.k(),
            images: problem.total_images(),
            feasible,
            total_j: feasible.then(|| plan.total_energy()),
            j_per_image: if feasible { plan.energy_per_image(problem) } else { None },
            rho_min,
            rho_max,
            violations: plan.feasibility.tags(),
        };
        let n = problem.n_sats();
        let mut allocation = Vec::new();
        for k in 0..problem.k() {
            for j in 0..=n {
                let x = plan.x[[k, j]];
                if x == 0.0 {
                    continue;
                }
                allocation.push(AllocationRow {
                    scenario: scenario.into(),
                    strategy: strategy.name().into(),
                    value,
                    k,
                    n: if j == n { "g".into() } else { j.to_string() },
                    x_bits: x,
                    f_hz: (j < n).then(|| plan.freq[[k, j]]),
                });
            }
        }
        Self {
            summary,
            allocation,
            trace: solution.trace.clone(),
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(|source| OutputError::Csv {
        path: path.into(),
        source,
    })?;
    for r in rows {
        w.serialize(r).map_err(|source| OutputError::Csv {
            path: path.into(),
            source,
        })?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.into(),
        source,
    })
}

/// Writes `summary.csv`, `allocation.csv` and `trace.csv` into `dir`.
pub fn emit_results(dir: &Path, runs: &[RunRecord]) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.into(),
        source,
    })?;
    write_csv(&dir.join("summary.csv"), runs.iter().map(|r| &r.summary))?;
    write_csv(
        &dir.join("allocation.csv"),
        runs.iter().flat_map(|r| r.allocation.iter()),
    )?;
    write_csv(
        &dir.join("trace.csv"),
        runs.iter().flat_map(|r| {
            r.trace.iter().map(move |t| TraceLine {
                scenario: &r.summary.scenario,
                strategy: &r.summary.strategy,
                value: r.summary.value,
                outer: t.outer,
                block: t.block,
                round: t.round,
                inner_iterations: t.inner_iterations,
                objective: t.objective,
                processing_residual: t.processing_residual,
                downlink_residual: t.downlink_residual,
                isl_residual: t.isl_residual,
            })
        }),
    )
}

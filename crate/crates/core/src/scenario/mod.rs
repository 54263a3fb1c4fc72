//! Scenario files, runs, traces and metrics.

pub mod config;
pub mod metrics;
pub mod trace;
pub mod world;

pub use config::{load_scenario, parse_scenario, Mode, Scenario};
pub use metrics::{csv_string, write_csv, FlowMetrics, HandoverMetrics, QueueMetrics, RunMetrics, CSV_COLUMNS};
pub use trace::{Trace, TraceLine};
pub use world::{RunOptions, RunOutput};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("output error: {0}")]
    Output(String),
}

impl SimError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Invariant(_) => 3,
            SimError::Output(_) => 1,
        }
    }
}

/// Runs `scenario` once with tracing on.
pub fn run(scenario: &Scenario, mode: Mode, seed: u64) -> Result<RunOutput, SimError> {
    world::run_with(scenario, mode, seed, RunOptions::default())
}

pub fn run_with(scenario: &Scenario, mode: Mode, seed: u64, opts: RunOptions) -> Result<RunOutput, SimError> {
    world::run_with(scenario, mode, seed, opts)
}

/// Runs the same scenario and seed under each mode, in parallel.
pub fn compare(scenario: &Scenario, runs: &[(Mode, u64)]) -> Result<Vec<RunMetrics>, SimError> {
    if runs.len() < 2 {
        return Err(SimError::Config("compare needs at least two modes".into()));
    }
    if runs.iter().any(|r| r.1 != runs[0].1) {
        return Err(SimError::Config("compare requires every mode to use the same seed".into()));
    }
    let opts = RunOptions { trace: false };
    std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|&(mode, seed)| s.spawn(move || world::run_with(scenario, mode, seed, opts).map(|o| o.metrics)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SimError::Invariant("simulation thread panicked".into()))))
            .collect()
    })
}

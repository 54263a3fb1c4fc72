use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use handover_sim::scenario::{compare, load_scenario, run_with, write_csv, Mode, RunOptions, SimError};

#[derive(Parser)]
#[command(name = "handover-sim", version, about = "TCP across terrestrial/satellite handovers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under one mode.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// baseline, proactive or reset-cwnd; defaults to the scenario's mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one scenario under several modes with one seed.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated list; an entry may pin its seed as `mode@seed`.
        #[arg(long, value_delimiter = ',', value_parser = parse_mode_seed, default_value = "baseline,proactive")]
        modes: Vec<(Mode, Option<u64>)>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and exit.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse_or_err(s)
}

fn parse_mode_seed(s: &str) -> Result<(Mode, Option<u64>), String> {
    match s.split_once('@') {
        None => Ok((parse_mode(s.trim())?, None)),
        Some((m, seed)) => {
            let seed = seed.trim().parse().map_err(|_| format!("invalid seed in `{s}`"))?;
            Ok((parse_mode(m.trim())?, Some(seed)))
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), SimError> {
    fs::write(path, contents).map_err(|e| SimError::Output(format!("{}: {e}", path.display())))
}

fn emit_csv(path: Option<&Path>, runs: &[handover_sim::scenario::RunMetrics]) -> Result<(), SimError> {
    match path {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| SimError::Output(format!("{}: {e}", p.display())))?;
            write_csv(file, runs)
        }
        None => write_csv(std::io::stdout().lock(), runs),
    }
}

fn execute(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Validate { scenario } => {
            let sc = load_scenario(&scenario)?;
            println!(
                "ok: {} ({} nodes, {} links, {} flows, {} handovers)",
                sc.sim.name,
                sc.nodes.len(),
                sc.links.len(),
                sc.flows.len(),
                sc.handovers.len()
            );
            Ok(())
        }
        Command::Run { scenario, mode, seed, metrics, trace } => {
            let sc = load_scenario(&scenario)?;
            let mode = mode.unwrap_or(sc.sim.mode);
            let seed = seed.unwrap_or(sc.sim.seed);
            let out = run_with(&sc, mode, seed, RunOptions { trace: trace.is_some() })?;
            if let Some(p) = &trace {
                write_file(p, out.trace.as_bytes())?;
            }
            emit_csv(metrics.as_deref(), std::slice::from_ref(&out.metrics))
        }
        Command::Compare { scenario, modes, seed, out } => {
            let sc = load_scenario(&scenario)?;
            let default_seed = seed.unwrap_or(sc.sim.seed);
            let runs: Vec<(Mode, u64)> = modes.iter().map(|&(m, s)| (m, s.unwrap_or(default_seed))).collect();
            let metrics = compare(&sc, &runs)?;
            emit_csv(out.as_deref(), &metrics)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match panic::catch_unwind(AssertUnwindSafe(|| execute(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal invariant violated");
            ExitCode::from(3)
        }
    }
}

//! `nlsdiag`: run a scenario or roll finished runs into a markdown table.
//!
//! Exit status: 0 when every invariant holds, 1 when some invariant fails,
//! 2 on configuration, I/O or solver errors, including aborted evolutions.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nls_experiments::report::emit_report;
use nls_experiments::{parse_config, run_scenario, RunError, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "nlsdiag", about = "Pairing diagnostics for scattering of nonlinear Schrödinger flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its tables and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the configuration.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides `scenario` from the configuration.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Single worker thread; output files are identical across runs either way.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        max_threads: Option<usize>,
    },
    /// Summarize finished run directories as a markdown table.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Command::Run { config, out_dir, scenario, seed, deterministic, max_threads } => {
            let bytes = std::fs::read(&config)
                .map_err(|e| RunError::Io { path: config.display().to_string(), source: e })?;
            let mut cfg = parse_config(&bytes)?;
            if let Some(name) = scenario {
                cfg.scenario =
                    Scenario::from_name(&name).ok_or_else(|| RunError::Config(format!("scenario: unknown {name:?}")))?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out_dir
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(cfg.scenario.name()));
            let res = run_scenario(&cfg, &dir, &RunOptions { deterministic, max_threads })?;
            let s = &res.summary;
            for inv in &s.invariants {
                println!("{} {}", if inv.passed { "PASS" } else { "FAIL" }, inv.name);
            }
            if s.horizon_exceeded {
                println!("note: samples beyond the box validity horizon");
            }
            if let Some(reason) = &s.aborted {
                eprintln!("aborted: {reason}");
                return Err(RunError::Format(format!("evolution aborted: {reason}")));
            }
            println!("{} of {} invariants hold; output in {}", s.pass_count(), s.invariants.len(), dir.display());
            Ok(s.passed())
        }
        Command::Report { out, dirs } => {
            let text = emit_report(&dirs)?;
            std::fs::write(&out, text).map_err(|e| RunError::Io { path: out.display().to_string(), source: e })?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

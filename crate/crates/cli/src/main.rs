//! `mdiw`: quantify entanglement from simulated or recorded correlation
//! tables, sweep isotropic visibilities, and run the sequential-adversary
//! checks.
//!
//! Exit codes: 0 success, 1 failure (bad config, solver failure), 2 data no
//! POVM can produce, 3 a bound violated in an adversary run, 64 usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mdiw::experiment::{
    read_json, run_adversary, run_quantify, run_sweep, write_sweep_csv, AdversaryConfig,
    ExperimentConfig, ExperimentError, SweepSpec,
};

const EXIT_VIOLATION: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "mdiw", version, about = "Measurement-device-independent entanglement quantification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the corresponding config fields.
#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Interior-point solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Bootstrap resamples for the uncertainty of q.
    #[arg(long)]
    resamples: Option<usize>,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if let Some(r) = self.resamples {
            c.resamples = r;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Quantify one experiment and write a JSON report.
    Quantify {
        #[arg(long)]
        config: PathBuf,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the witness read off the dual solution.
        #[arg(long)]
        witness: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a visibility sweep and write `p,q_value,q_std,verdict_dim,status` CSV.
    Sweep {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid points solved at once; all cores when absent.
        #[arg(long)]
        parallel: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Bound checks on sequential strategies, or the CGLMP attack search.
    Adversary {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => io::stdout().write_all(bytes).context("cannot write to stdout"),
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("reports serialize");
    s.push(b'\n');
    s
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Quantify {
            config,
            out,
            witness,
            overrides,
        } => {
            let (mut c, base) = ExperimentConfig::load(&config)?;
            overrides.apply(&mut c);
            c.witness |= witness;
            let report = run_quantify(&c, &base)?;
            write_out(out.as_deref(), &pretty(&report))?;
            Ok(0)
        }
        Command::Sweep {
            sweep,
            out,
            parallel,
            overrides,
        } => {
            let mut spec: SweepSpec = read_json(&sweep)?;
            overrides.apply(&mut spec.base);
            let base = sweep.parent().map(Path::to_path_buf).unwrap_or_default();
            let rows = run_sweep(&spec, &base, parallel)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            write_out(out.as_deref(), &buf)?;
            for r in rows.iter().filter(|r| r.status != "ok") {
                eprintln!("warning: point p = {} failed: {}", r.p, r.status);
            }
            Ok(0)
        }
        Command::Adversary { config, out, seed } => {
            let mut c: AdversaryConfig = read_json(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            let report = run_adversary(&c)?;
            write_out(out.as_deref(), &pretty(&report))?;
            if report.violations > 0 {
                eprintln!("{} bound violations", report.violations);
                return Ok(EXIT_VIOLATION);
            }
            if let Some(a) = report.attack.as_ref().filter(|a| !a.violation) {
                eprintln!("warning: best CGLMP score {} does not exceed the local bound", a.score);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<ExperimentError>()
                .map_or(1, ExperimentError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

//! `pilot-dirac`: run scenarios, verify the model invariants, plot results.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 model error,
//! 4 verification failure.

mod config;
mod output;
mod plot;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use pilot_dirac::verify::{self, Resolution};

const EXIT_CONFIG: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const THREADS_VAR: &str = "PILOT_DIRAC_THREADS";

#[derive(Parser)]
#[command(name = "pilot-dirac", version, about = "Coupled particle/field Dirac dynamics in 1+1 dimensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a `key = value` config file.
    Run { config: PathBuf },
    /// Run the invariant battery and print one PASS/FAIL line per check.
    Verify {
        /// Reduced resolution (256 sites, 2000 samples).
        #[arg(long)]
        fast: bool,
    },
    /// Write SVG plots for a finished run directory.
    Plot { dir: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("{THREADS_VAR} = '{v}' is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn cmd_run(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = match config::parse(&text, base) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run::execute(&cfg) {
        Ok(m) => {
            println!("wrote {} files to {}", m.files.len(), cfg.output.display());
            ExitCode::SUCCESS
        }
        Err(run::RunError::Model(e)) => {
            eprintln!("model error: {e} (see {})", cfg.output.join("diagnostic.json").display());
            ExitCode::from(EXIT_MODEL)
        }
        Err(run::RunError::Io(e)) => {
            eprintln!("error: writing {}: {e}", cfg.output.display());
            ExitCode::FAILURE
        }
    }
}

fn cmd_verify(fast: bool) -> ExitCode {
    let t0 = Instant::now();
    let report = verify::run(if fast { Resolution::Fast } else { Resolution::Full });
    print!("{}", report.render());
    eprintln!("wall time {:.2} s", t0.elapsed().as_secs_f64());
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    }
}

fn cmd_plot(dir: &Path) -> ExitCode {
    let result = output::OutputTree::reopen(dir).and_then(|mut tree| {
        let n = plot::render(&mut tree)?;
        tree.finish()?;
        Ok(n)
    });
    match result {
        Ok(n) => {
            println!("wrote {n} plots to {}", dir.join("plots").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { fast } => cmd_verify(fast),
        Command::Plot { dir } => cmd_plot(&dir),
    }
}

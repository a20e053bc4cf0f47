use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ffsd::harness::experiment::{fit_slope, read_csv, Column, ResultRow};
use ffsd::harness::{
    run_experiment, stability_trials, verify_suite_with, ExperimentConfig, VerifyOptions,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFY: u8 = 2;

#[derive(Parser)]
#[command(name = "ffsd", version, about = "Fusion frame Sigma-Delta quantization experiments")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write the results as CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the state bound on random signals in the δ-ball.
    Stability {
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the self-check suite.
    Verify {
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Perturb the first filter weight (the suite should then fail).
        #[arg(long, hide = true)]
        perturb_h1: bool,
    },
    /// Least-squares log-log slope of a CSV column against N.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        column: String,
    },
}

enum Failure {
    Config(anyhow::Error),
    Verify(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn load(path: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn print_rows(rows: &[ResultRow]) {
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>10} {:>12}",
        "N", "canonical", "sobolev", "memoryless", "max|v|", "bound"
    );
    for r in rows {
        let mem = r.err_memoryless.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>6} {:>12.4e} {:>12.4e} {:>12} {:>10.4} {:>12.4e}",
            r.n, r.err_canonical, r.err_sobolev, mem, r.max_state_norm, r.apriori_bound
        );
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Experiment { config, out } => {
            let mut cfg = load(&config)?;
            cfg.outputs.csv = Some(out.clone());
            let rows = run_experiment(&cfg).context("experiment failed")?;
            print_rows(&rows);
            if rows.len() >= 3 {
                for col in [Column::ErrCanonical, Column::ErrSobolev] {
                    if let Ok(s) = fit_slope(&rows, col) {
                        println!("slope {col}: {s:.4}");
                    }
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Stability { trials, config } => {
            let cfg = load(&config)?;
            let rep = stability_trials(trials, &cfg).context("stability trials failed")?;
            println!("{}", serde_json::to_string_pretty(&rep).context("serializing report")?);
            let verdict = if rep.passed { "PASS" } else { "FAIL" };
            println!("{verdict}: max state norm {:.6} vs bound {:.6}", rep.max_state_norm, rep.bound);
            if !rep.passed {
                return Err(Failure::Verify(format!("{} bound violations", rep.violations)));
            }
        }
        Command::Verify { json, perturb_h1 } => {
            let rep = verify_suite_with(VerifyOptions { perturb_h1 });
            if json {
                println!("{}", serde_json::to_string_pretty(&rep).context("serializing report")?);
            } else {
                for c in &rep.checks {
                    let verdict = if c.passed { "PASS" } else { "FAIL" };
                    println!("{verdict} {} measured={:.3e} tol={:.1e}", c.name, c.measured, c.tolerance);
                }
            }
            let failed = rep.failures().count();
            if failed > 0 {
                return Err(Failure::Verify(format!("{failed} checks failed")));
            }
        }
        Command::Fit { csv, column } => {
            let column: Column = column.parse().map_err(anyhow::Error::from)?;
            let rows = read_csv(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let slope = fit_slope(&rows, column).context("fit failed")?;
            println!("{slope}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

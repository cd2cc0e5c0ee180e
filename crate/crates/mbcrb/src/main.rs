use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand, ValueEnum};
use mbcrb::commands::{self, PseudotrueMode, RunOptions};
use mbcrb::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "mbcrb", version, about = "Misspecified Bayesian Cramér-Rao bounds for linear-Gaussian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write BCRB, MBCRB and related matrices at the configured N.
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Monte Carlo sweep and write CSV tables, SVG plots and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured number of trials per grid point.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all available cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Compare the closed-form pseudotrue parameter with the KL minimizer.
    Pseudotrue {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        psi: Vec<f64>,
        /// Optional directory for pseudotrue.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        /// Draws for the sample-average objective.
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Analytic,
    Sampled,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::ConfigError as i32 } else { 0 };
            let _ = e.print();
            process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Bound { config, out } => commands::bound(config, out),
        Command::Run {
            config,
            out,
            trials,
            seed,
            threads,
        } => commands::run(
            config,
            out,
            &RunOptions {
                trials: *trials,
                seed: *seed,
                threads: *threads,
            },
        ),
        Command::Pseudotrue {
            config,
            psi,
            out,
            mode,
            mc_samples,
            seed,
        } => {
            let mode = match mode {
                Mode::Analytic => PseudotrueMode::Analytic,
                Mode::Sampled => PseudotrueMode::Sampled {
                    mc_samples: *mc_samples,
                    seed: *seed,
                },
            };
            commands::pseudotrue(config, psi, mode, out.as_ref())
        }
    };
    match result {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.exit_code() as i32);
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use peerhedge_cli::commands::format_check_report;
use peerhedge_cli::{cmd_check, cmd_run, cmd_sweep, CheckCommand, RunOptions, SweepOptions};
use peerhedge_core::sim::CheckOptions;

/// Online expert selection from peer-prediction feedback.
#[derive(Parser)]
#[command(name = "peerhedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace and summary.
    Run {
        config: PathBuf,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Output directory (default: $PEERHEDGE_OUT_DIR, then ./out).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Do not print the summary table.
        #[arg(long)]
        quiet: bool,
    },
    /// Replicate an experiment over a list of parameter values.
    Sweep {
        config: PathBuf,
        /// horizon, seed, eta, p_star (reveal_prob), flip_prob, or a JSON
        /// pointer such as /world/generator/p.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
        /// Replications per value.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output CSV (default: <out-dir>/sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Verify the scoring identities and run seeded Monte Carlo checks.
    Check {
        /// Coarser grids and fewer replications.
        #[arg(long)]
        quick: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    NegateFSign,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            horizon,
            out_dir,
            quiet,
        } => cmd_run(&RunOptions {
            config,
            seed,
            horizon,
            out_dir,
        })
        .map(|outcome| {
            if !quiet {
                print!("{}", outcome.table);
                for path in outcome.trace_path.iter().chain(&outcome.summary_path) {
                    println!("wrote {}", path.display());
                }
            }
            true
        }),
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            threads,
            out,
            out_dir,
        } => cmd_sweep(&SweepOptions {
            config,
            param: param.clone(),
            values,
            seeds,
            threads,
            out,
            out_dir,
        })
        .map(|outcome| {
            for (value, median) in &outcome.medians {
                println!("{param}={value}  median regret {median:.6}");
            }
            println!("wrote {} rows to {}", outcome.rows, outcome.path.display());
            true
        }),
        Command::Check {
            quick,
            report,
            inject_fault,
        } => cmd_check(&CheckCommand {
            options: CheckOptions {
                quick,
                negate_f_sign: matches!(inject_fault, Some(Fault::NegateFSign)),
            },
            report,
        })
        .map(|report| {
            print!("{}", format_check_report(&report));
            report.passed()
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

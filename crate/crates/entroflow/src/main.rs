use std::path::PathBuf;

use clap::{Parser, Subcommand};
use entroflow::cli;

/// Batch solver for a conserved phase-separation system: entropy balance in
/// the logarithm of the temperature coupled to viscous Cahn-Hilliard phase
/// dynamics with singular potentials.
#[derive(Parser)]
#[command(name = "entroflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configuration and write trajectory.csv, diagnostics.csv
    /// and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overridden by ENTROFLOW_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Halving continuation study over h, eps or tau; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to halve: h, eps or tau.
        #[arg(long)]
        param: String,
        /// Number of levels (>= 2).
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full invariant battery on the built-in preset suite.
    Check,
    /// Randomized comparisons against the dense oracle.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cases per graph kind.
        #[arg(long, default_value_t = 20)]
        cases: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => cli::cmd_run(&config, out.as_deref()),
        Command::Sweep {
            config,
            param,
            levels,
            out,
        } => cli::cmd_sweep(&config, &param, levels, out.as_deref()),
        Command::Check => cli::cmd_check(),
        Command::Oracle { seed, cases } => cli::cmd_oracle(seed, cases),
    };
    std::process::exit(code);
}

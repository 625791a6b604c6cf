use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secdetect_cli::config::SweepParam;
use secdetect_cli::error::CliError;
use secdetect_cli::experiment::{execute, Command, Invocation};

#[derive(Parser)]
#[command(
    name = "secdetect",
    version,
    about = "Secrecy-constrained compressive detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Design a measurement matrix and write it with a report.
    Design(Common),
    /// Re-evaluate a matrix file against a config.
    Evaluate(Common),
    /// Monte Carlo ROC curves for a matrix (designed first if none given).
    Simulate(Common),
    /// Design and evaluate over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep: tau, alpha, gamma or m.
        #[arg(long)]
        param: Option<SweepParam>,
        /// Comma-separated values; "inf" is accepted.
        #[arg(long, value_delimiter = ',', value_parser = parse_real)]
        values: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Root directory for run outputs (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_real(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|e| format!("{e}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, param, values) = match cli.command {
        Cmd::Design(c) => (Command::Design, c, None, None),
        Cmd::Evaluate(c) => (Command::Evaluate, c, None, None),
        Cmd::Simulate(c) => (Command::Simulate, c, None, None),
        Cmd::Sweep {
            common,
            param,
            values,
        } => (Command::Sweep, common, param, values),
    };
    let result = (|| {
        if let Some(threads) = common.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
        }
        execute(&Invocation {
            command,
            config: common.config,
            matrix: common.matrix,
            out: common.out,
            seed: common.seed,
            sweep_param: param,
            sweep_values: values,
        })
    })();
    match result {
        Ok(report) => {
            println!("{}", report.run_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use basil::config::{FitArgs, LoglikArgs, SampleArgs, SelectKArgs, SimulateArgs, StudyArgs};
use basil::{execute, io, Command, RunConfig};
use clap::{Parser, Subcommand};

/// Gene-set informed Bayesian factor model.
#[derive(Debug, Parser)]
#[command(name = "basil", version, about)]
struct Cli {
    /// Seed for every random quantity.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "BASIL_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Information criterion profile and the selected number of factors.
    SelectK {
        #[command(flatten)]
        args: SelectKArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the model and write posterior means, hyperparameters and diagnostics.
    Fit {
        #[command(flatten)]
        args: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior draws from a fit plus gene-gene correlation intervals.
    Sample {
        #[command(flatten)]
        args: SampleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one synthetic data set with its planted loadings.
    Simulate {
        #[command(flatten)]
        args: SimulateArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replication study comparing estimators.
    Study {
        #[command(flatten)]
        args: StudyArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out log-likelihood under a fit's posterior mean covariance.
    Loglik {
        #[command(flatten)]
        args: LoglikArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a saved resolved-config.json again.
    Rerun {
        #[arg(long)]
        config: PathBuf,
        /// Write to this directory instead of the one in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_from(cli: Cli) -> basil::Result<RunConfig> {
    let (command, output_dir) = match cli.command {
        Cmd::SelectK { args, out } => (Command::SelectK(args), out),
        Cmd::Fit { args, out } => (Command::Fit(args), out),
        Cmd::Sample { args, out } => (Command::Sample(args), out),
        Cmd::Simulate { args, out } => (Command::Simulate(args), out),
        Cmd::Study { args, out } => (Command::Study(args), out),
        Cmd::Loglik { args, out } => (Command::Loglik(args), out),
        Cmd::Rerun { config, out } => {
            let mut saved: RunConfig = io::read_json(&config)?;
            if let Some(out) = out {
                saved.output_dir = out;
            }
            return Ok(saved);
        }
    };
    Ok(RunConfig { seed: cli.seed, threads: cli.threads, log_level: cli.log_level, output_dir, command })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config_from(cli).and_then(|config| {
        env_logger::Builder::new().parse_filters(&config.log_level).format_timestamp(None).init();
        execute(config)
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

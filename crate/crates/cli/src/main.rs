use std::path::PathBuf;
use std::process::ExitCode;

use blindmimo_cli::commands::{cmd_crb, cmd_estimate, cmd_experiment, Options};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blindmimo", version, about = "Blind sparse channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `monte_carlo.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to `output.path` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo CCDFs of η for every configured estimator.
    Experiment(Common),
    /// Estimate the channel from one stored observation block.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Observation block in the binary container format.
        #[arg(long)]
        input: PathBuf,
    },
    /// Mean η_CRB per SNR.
    Crb(Common),
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options {
            config: c.config,
            seed: c.seed,
            threads: c.threads,
            out: c.out,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Experiment(c) => cmd_experiment(&c.into()),
        Command::Estimate { common, input } => cmd_estimate(&common.into(), &input),
        Command::Crb(c) => cmd_crb(&c.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

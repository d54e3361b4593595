use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toolbox_cli::commands;
use toolbox_cli::{CliResult, Method};

#[derive(Parser)]
#[command(name = "hessian-toolbox", version, about = "Hessian-based influence, uncertainty and extrapolation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact diagonalization: write the dataset and the order-parameter table.
    GenData(Common),
    /// Train the classifier: write the checkpoint, history and accuracies.
    Train(Common),
    /// Run the analyses on a trained checkpoint.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Methods to run (repeatable); defaults to the config's list.
        #[arg(long = "method", value_enum)]
        methods: Vec<Method>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace every RNG seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> CliResult<()> {
    let load = |c: &Common| commands::load_config(&c.config, c.out.as_deref(), c.seed);
    let manifest = match &cli.command {
        Command::GenData(c) => commands::gen_data(&load(c)?)?,
        Command::Train(c) => commands::train(&load(c)?)?,
        Command::Analyze { common, methods } => commands::analyze(&load(common)?, methods)?,
    };
    for t in &manifest.timings {
        eprintln!("{:<24} {:>10.2} s", t.stage, t.seconds);
    }
    for a in &manifest.artifacts {
        println!("{a}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

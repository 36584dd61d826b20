//! `evprice`: generate request sequences, run pricing experiments, tabulate
//! discretization errors and grid-search MCTS hyperparameters.

mod commands;
mod keys;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evprice::Error;

#[derive(Parser)]
#[command(name = "evprice", version, about = "Dynamic pricing of EV charging reservations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write request sequences and a manifest.
    #[command(after_long_help = keys::GEN_HELP.as_str(), after_help = keys::GEN_HELP.as_str())]
    Gen(Common),
    /// Run pricers on paired sequences and print the results CSV.
    #[command(after_long_help = keys::RUN_HELP.as_str(), after_help = keys::RUN_HELP.as_str())]
    Run(Common),
    /// Print discretization errors for every (k, lambda) pair.
    #[command(name = "error-table", after_long_help = keys::ERROR_HELP.as_str(), after_help = keys::ERROR_HELP.as_str())]
    ErrorTable(Common),
    /// Evaluate MCTS over a grid of (exploration, depth, iterations).
    #[command(name = "grid-search", after_long_help = keys::GRID_HELP.as_str(), after_help = keys::GRID_HELP.as_str())]
    GridSearch(Common),
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set mcts.iterations=800. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed (key `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (key `out`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core (key `workers`).
    #[arg(short, long)]
    workers: Option<usize>,
}

impl Common {
    /// Config file, then `--set` overrides, then the dedicated flags.
    fn load(&self) -> evprice::Result<evprice::config::KvMap> {
        let mut kv = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                evprice::config::KvMap::parse(&text)?
            }
            None => evprice::config::KvMap::new(),
        };
        for s in &self.set {
            kv.set_assignment(s)?;
        }
        if let Some(seed) = self.seed {
            kv.set("seed", seed.to_string());
        }
        if let Some(out) = &self.out {
            kv.set("out", out.display().to_string());
        }
        if let Some(w) = self.workers {
            kv.set("workers", w.to_string());
        }
        Ok(kv)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Contract(_) => 3,
        Error::Resource { .. } => 4,
        Error::Config(_) | Error::Parse { .. } | Error::Domain(_) | Error::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(c) => c.load().and_then(commands::gen),
        Command::Run(c) => c.load().and_then(commands::run),
        Command::ErrorTable(c) => c.load().and_then(commands::error_table),
        Command::GridSearch(c) => c.load().and_then(commands::grid_search),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evprice: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

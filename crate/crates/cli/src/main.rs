//! `infodyn`: train the bar VAE, analyze a piece across bit budgets, and
//! inspect the oracle and MI estimator on their own.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod plot;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "infodyn", version, about = "Deep music information dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options every command accepts.
#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: available parallelism].
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long)]
    log_level: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the VAE on a directory of MIDI files.
    TrainVae {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: commands::train::TrainArgs,
    },
    /// Analyze one piece at several bit budgets.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: commands::analyze::AnalyzeArgs,
    },
    /// Build an oracle over a symbol string or a MIDI file and print its IR profile.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: commands::oracle::OracleArgs,
    },
    /// Estimate mutual information between two sample files.
    Mine {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: commands::mine::MineArgs,
    },
}

impl Common {
    fn resolve(&self) -> Result<FileConfig, CliError> {
        let mut cfg = FileConfig::load(self.config.as_deref())?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        if self.log_level.is_some() {
            cfg.log_level = self.log_level.clone();
        }
        Ok(cfg)
    }
}

fn init_runtime(cfg: &FileConfig) -> Result<(), CliError> {
    let level = cfg.log_level.as_deref().unwrap_or("info");
    if level.parse::<log::LevelFilter>().is_err() {
        return Err(CliError::Usage(format!("unknown log level `{level}`")));
    }
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainVae { common, args } => {
            let mut cfg = common.resolve()?;
            args.apply(&mut cfg);
            init_runtime(&cfg)?;
            commands::train::run(&cfg)
        }
        Command::Analyze { common, args } => {
            let mut cfg = common.resolve()?;
            args.apply(&mut cfg);
            init_runtime(&cfg)?;
            commands::analyze::run(&cfg)
        }
        Command::Oracle { common, args } => {
            let mut cfg = common.resolve()?;
            args.apply(&mut cfg);
            init_runtime(&cfg)?;
            commands::oracle::run(&cfg, &args)
        }
        Command::Mine { common, args } => {
            let mut cfg = common.resolve()?;
            args.apply(&mut cfg);
            init_runtime(&cfg)?;
            commands::mine::run(&cfg, &args)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from([
            "infodyn",
            "mine",
            "--seed",
            "9",
            "--out-dir",
            "o",
            "a.csv",
            "b.csv",
        ])
        .unwrap();
        let Command::Mine { common, .. } = cli.command else {
            panic!("wrong subcommand")
        };
        let cfg = common.resolve().unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.out_dir(), PathBuf::from("o"));
    }
}

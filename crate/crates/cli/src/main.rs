mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subtrace::evalharness::Protocol;
use subtrace::infer::SearchMode;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "subtrace", version, about = "Metro trip inference from accelerometer traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; every module seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Base directory for corpus, models and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Network description file.
    #[arg(long)]
    network: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a line, labelled trips, mixed-mode days and non-metro traces.
    Generate(Common),
    /// Train the extraction model and the interval ensemble on a corpus.
    Train(Common),
    /// Infer the metro trips hidden in a sensor trace.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        /// full or reduced
        #[arg(long)]
        mode: Option<String>,
    },
    /// Label a corpus from a few seed intervals and train on the result.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seed interval ids; defaults to the distinctive ones.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Leave-one-trip-out evaluation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// supervised or semisupervised
        #[arg(long, default_value = "supervised")]
        protocol: String,
        /// Comma-separated subtrip lengths.
        #[arg(long)]
        lengths: Option<String>,
    },
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("bad {what} entry {t:?}"))))
        .collect()
}

fn build_config(common: &Common) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(common.config.as_deref())?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    cfg.apply_root_seed();
    if let Some(out) = &common.out {
        cfg.paths.root = out.clone();
    }
    if let Some(n) = &common.network {
        cfg.paths.network = Some(n.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(c) => commands::cmd_generate(&build_config(&c)?).map(drop),
        Command::Train(c) => commands::cmd_train(&build_config(&c)?),
        Command::Attack { common, trace, mode } => {
            let cfg = build_config(&common)?;
            let mode = mode
                .map(|m| m.parse::<SearchMode>().map_err(|_| CliError::Usage(format!("unknown search mode {m:?}"))))
                .transpose()?;
            commands::cmd_attack(&cfg, &trace, mode).map(drop)
        }
        Command::Bootstrap { common, seeds } => {
            let cfg = build_config(&common)?;
            let seeds = seeds.map(|s| parse_list(&s, "seed")).transpose()?;
            commands::cmd_bootstrap(&cfg, seeds).map(drop)
        }
        Command::Evaluate {
            common,
            protocol,
            lengths,
        } => {
            let mut cfg = build_config(&common)?;
            let protocol = match protocol.as_str() {
                "supervised" => Protocol::Supervised,
                "semisupervised" => Protocol::Semisupervised,
                other => return Err(CliError::Usage(format!("unknown protocol {other:?}"))),
            };
            if let Some(l) = lengths {
                cfg.benchmark.subtrip_lengths = parse_list(&l, "length")?;
            }
            cfg.benchmark.validate()?;
            commands::cmd_evaluate(&cfg, protocol).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SUBTRACE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

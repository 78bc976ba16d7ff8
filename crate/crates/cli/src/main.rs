//! `pinph`: ingest trade data, estimate PIN/PH per asset and period, simulate
//! synthetic panels, run recovery experiments and build report tables.

mod commands;
mod config;
mod output;
mod report;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinph::ingest::PeriodScheme;

use crate::config::Loaded;
use crate::output::{Classify, CliError, CliResult, Failure, Provenance};

#[derive(Debug, Parser)]
#[command(name = "pinph", version, about = "PIN and PH estimation pipeline")]
struct Cli {
    /// TOML run configuration; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Estimation window: `quarterly` or `monthly` (overrides `scheme` in the config).
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<PeriodScheme>,
    /// Worker threads; 0 uses all cores. Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log debug detail to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the filtered asset-day panel from trades or daily counts.
    Ingest,
    /// Estimate every asset-period window of the panel.
    Estimate,
    /// Write a synthetic market, metadata and counts (or trades) panel.
    Simulate,
    /// Repeated simulate-and-estimate runs against a known parameter set.
    Recover,
    /// Summary tables, regressions and the size-group profile from results.
    #[command(alias = "regress")]
    Report,
}

fn parse_scheme(s: &str) -> Result<PeriodScheme, String> {
    s.parse()
}

fn scheme_name(s: PeriodScheme) -> &'static str {
    match s {
        PeriodScheme::Quarterly => "quarterly",
        PeriodScheme::Monthly => "monthly",
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut loaded = Loaded::read(cli.config.as_deref()).or_fail(Failure::Usage)?;
    if let Some(seed) = cli.seed {
        loaded.config.seed = seed;
    }
    if let Some(s) = cli.scheme {
        loaded.config.scheme = scheme_name(s).into();
    }
    loaded.out_override = cli.out.clone();
    loaded.config.scheme().or_fail(Failure::Usage)?;

    let prov = Provenance {
        config_hash: loaded.config.hash(),
        seed: loaded.config.seed,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .or_fail(Failure::Usage)?;
    tracing::debug!(config = ?loaded.config, "effective configuration");
    pool.install(|| match cli.command {
        Command::Ingest => commands::ingest(&loaded, &prov),
        Command::Estimate => commands::estimate_cmd(&loaded, &prov),
        Command::Simulate => commands::simulate(&loaded, &prov),
        Command::Recover => commands::recover(&loaded, &prov),
        Command::Report => report::report(&loaded, &prov),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        tracing::Level::DEBUG
    } else {
        tracing::Level::INFO
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { kind, error }) => {
            tracing::error!("{error:#}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}

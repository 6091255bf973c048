//! `intkrige`: interval kriging, variogram fitting, cross-validation, design
//! snow load intervals and synthetic fields from the command line.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "intkrige", version, about = "Interval-valued kriging toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Empirical variograms of a sample file and fitted center/radius models.
    Variogram,
    /// Interval predictions at target points or on a grid.
    Krige,
    /// K-fold cross-validation RMSE table.
    Cv,
    /// Design load intervals from station snow records.
    Snowload,
    /// Synthetic interval field.
    Simulate,
}

/// Flags override the config file, which overrides built-in defaults.
#[derive(Args, Debug)]
struct Opts {
    /// Flat `key = value` configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Kriging mode.
    #[arg(long, global = true, value_parser = ["sk", "ok"])]
    mode: Option<String>,
    /// Penalty variant.
    #[arg(long, global = true, value_parser = ["original", "adjusted"])]
    variant: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    stations: Option<String>,
    #[arg(long, global = true)]
    targets: Option<String>,
    #[arg(long, global = true)]
    models: Option<String>,
    #[arg(short, long, global = true)]
    output: Option<String>,
    #[arg(long, global = true)]
    geojson: Option<String>,
}

fn resolve(opts: &Opts) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &opts.config {
        cfg.load_file(p)?;
    }
    let named = [
        ("seed", &opts.seed),
        ("threads", &opts.threads),
        ("mode", &opts.mode),
        ("variant", &opts.variant),
        ("samples", &opts.samples),
        ("stations", &opts.stations),
        ("targets", &opts.targets),
        ("models", &opts.models),
        ("output", &opts.output),
        ("geojson", &opts.geojson),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, v).context("command-line flag")?;
        }
    }
    for kv in &opts.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k, v).context("--set")?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.opts)?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("starting the worker pool")?;
    }
    match cli.command {
        Command::Variogram => commands::variogram(&cfg),
        Command::Krige => commands::krige(&cfg),
        Command::Cv => commands::cv(&cfg),
        Command::Snowload => commands::snowload(&cfg),
        Command::Simulate => commands::simulate(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

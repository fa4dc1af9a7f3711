//! `deconv-quant` command line: kernel tables, deconvolution density
//! estimates, noisy k-means codebooks and rate experiments from JSON configs.

pub mod commands;
pub mod configs;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use deconv_quant::experiment::ExperimentConfig;
use deconv_quant::report::{to_json_string, SCHEMA_VERSION};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "deconv-quant",
    version,
    about = "Deconvolution k-means for noisy data"
)]
pub struct Cli {
    /// JSON config for the chosen command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed (`master_seed` for `rates`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate the deconvolution kernel on each axis.
    Kernel,
    /// Estimate the density of the clean signal on a grid.
    Kde,
    /// Noisy k-means codebook for a sample.
    Cluster,
    /// Replicated rate experiment: cells.csv and rate.json.
    Rates,
    /// Bandwidth schedules and rate exponents without running anything.
    Plan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Kde => "kde",
            Command::Cluster => "cluster",
            Command::Rates => "rates",
            Command::Plan => "plan",
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Validates inputs, runs the command and returns the summary printed on
/// success.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Invalid("--config is required".into()))?;
    let base = base_dir(config);
    let out = &cli.out;
    let work = || -> Result<Vec<PathBuf>> {
        match cli.command {
            Command::Kernel => {
                let cfg: configs::KernelCmdConfig = configs::load(config)?;
                prepare_out(out)?;
                commands::kernel(&cfg, out)
            }
            Command::Kde => {
                let mut cfg: configs::KdeCmdConfig = configs::load(config)?;
                cfg.sample.validate(&base)?;
                cfg.seed = cli.seed.unwrap_or(cfg.seed);
                prepare_out(out)?;
                commands::kde(&cfg, out)
            }
            Command::Cluster => {
                let mut cfg: configs::ClusterCmdConfig = configs::load(config)?;
                cfg.sample.validate(&base)?;
                cfg.seed = cli.seed.unwrap_or(cfg.seed);
                prepare_out(out)?;
                commands::cluster(&cfg, out)
            }
            Command::Rates => {
                let mut cfg: ExperimentConfig = configs::load(config)?;
                cfg.master_seed = cli.seed.unwrap_or(cfg.master_seed);
                cfg.validate()?;
                prepare_out(out)?;
                commands::rates(&cfg, out)
            }
            Command::Plan => {
                let cfg: configs::PlanCmdConfig = configs::load(config)?;
                prepare_out(out)?;
                commands::plan(&cfg, out)
            }
        }
    };
    let outputs = match cli.threads {
        Some(0) => return Err(CliError::Invalid("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invalid(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": cli.command.name(),
        "out": out.display().to_string(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

/// Parses `args`, runs, prints the summary or error JSON, returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(summary) => {
            print!("{}", to_json_string(&summary));
            0
        }
        Err(e) => {
            eprint!("{}", to_json_string(&e.to_json()));
            1
        }
    }
}

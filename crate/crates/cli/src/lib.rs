//! Command-line front end: theoretical curves, kernel characterization,
//! simulation sweeps, gamma fits and depth recommendations, all written
//! as CSV.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{parse_depth, parse_dims, parse_range, Overrides, RunConfig};

/// Comma-separated kernel dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimList(pub Vec<usize>);

fn parse_dim_list(s: &str) -> Result<DimList, String> {
    parse_dims(s).map(DimList)
}

/// Invalid configuration or arguments (exit status 2).
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "pipedepth", version, about = "Optimum pipeline depth exploration for FP units")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for kernel input data
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Kernel: ddot, dgemv, dgemm, dgeqrf or dgetrf
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Kernel dimensions, e.g. `1000`, `32,32` or `16,16,16`
    #[arg(long, global = true, value_parser = parse_dim_list)]
    pub dims: Option<DimList>,
    /// Reduction schedule: program-order or asap
    #[arg(long, global = true)]
    pub schedule: Option<String>,
    /// Hazard window in instructions
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Fixed pipe depth, e.g. `add=6` (repeatable)
    #[arg(long = "depth", global = true, value_parser = parse_depth)]
    pub depths: Vec<(String, u32)>,
    /// Class to sweep (repeatable)
    #[arg(long = "class", global = true)]
    pub classes: Vec<String>,
    /// Inclusive depth range FIRST:LAST for sweeps and model curves
    #[arg(long = "p-range", global = true, value_parser = parse_range)]
    pub range: Option<[u32; 2]>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theoretical TPI curves: depth, gamma and workload-size families
    ModelCurve {
        #[command(flatten)]
        common: Common,
    },
    /// Per-class instruction and hazard counts of a kernel
    Characterize {
        #[command(flatten)]
        common: Common,
    },
    /// One simulation at fixed depths
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write a per-cycle trace.csv
        #[arg(long)]
        trace: bool,
        /// Also write the kernel bundle (program, inputs, expected outputs)
        #[arg(long)]
        emit_bundle: bool,
    },
    /// Simulated CPI and TPI against depth, joined with the fitted model
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Fit gamma per class from simulated sweeps
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Fitted optimum depth against the simulated optimum, per class
    Recommend {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::ModelCurve { common }
            | Command::Characterize { common }
            | Command::Simulate { common, .. }
            | Command::Sweep { common }
            | Command::Fit { common }
            | Command::Recommend { common } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, UsageError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.apply(&Overrides {
        out: common.out.clone(),
        seed: common.seed,
        kernel: common.kernel.clone(),
        dims: common.dims.as_ref().map(|d| d.0.clone()),
        schedule: common.schedule.clone(),
        window: common.window,
        depths: common.depths.clone(),
        classes: common.classes.clone(),
        range: common.range,
    })?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli.command.common())?;
    match &cli.command {
        Command::ModelCurve { .. } => {
            for path in commands::model_curve(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Characterize { .. } => print!("{}", commands::characterize(&cfg)?),
        Command::Simulate {
            trace, emit_bundle, ..
        } => {
            let r = commands::simulate(&cfg, *trace, *emit_bundle)?;
            println!("total_cycles {}  cpi {}", r.total_cycles, r.cpi);
        }
        Command::Sweep { .. } => {
            let exp = commands::run_sweeps(&cfg)?;
            println!("{}", commands::write_sweep(&cfg, &exp)?.display());
        }
        Command::Fit { .. } => {
            let exp = commands::run_sweeps(&cfg)?;
            println!("{}", commands::write_fit(&cfg, &exp)?.display());
        }
        Command::Recommend { .. } => {
            let exp = commands::run_sweeps(&cfg)?;
            let recs = commands::recommendations(&exp);
            print!("{}", commands::write_recommendations(&cfg, &exp, &recs)?);
        }
    }
    Ok(())
}

/// Maps an error to the process exit status: 2 for usage errors, 1 for
/// everything else.
pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    if err.downcast_ref::<UsageError>().is_some() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

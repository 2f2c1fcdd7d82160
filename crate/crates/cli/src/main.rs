//! `saddleflow`: generate Gaussian two-class data, train a hard-margin SVM by
//! integrating the saddle-point flow, check a recorded trace and plot it.

mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "saddleflow", version, about = "Saddle-point flow SVM trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a two-class Gaussian dataset from a preset.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output CSV.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Integrate the flow on a dataset; writes trace.csv, trace.events.csv and summary.txt.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Verify optimality, passivity and the storage audit for a recorded trace.
    Check {
        #[command(flatten)]
        common: Common,
        /// Compare against the exact active-set solution (small datasets only).
        #[arg(long)]
        oracle: bool,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render the classification, primal, multiplier and storage figures as SVG.
    Plot {
        #[command(flatten)]
        common: Common,
    },
}

/// Options shared by every subcommand. Each maps to the config key of the same
/// name (dashes become underscores) and overrides the config file.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<String>,
    /// Points per class.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// One value, or one per primal coordinate separated by commas.
    #[arg(long)]
    tau_x: Option<String>,
    #[arg(long)]
    tau_mu: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    max_time: Option<f64>,
    /// KKT residual that stops integration, or `none`.
    #[arg(long)]
    kkt_tol: Option<String>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    blowup_bound: Option<f64>,
    /// Also write the figures after training.
    #[arg(long)]
    plot: bool,
    /// Quadrature budget for the passivity check.
    #[arg(long)]
    quad_tol: Option<f64>,
    /// One-based multiplier columns to keep in the trace, comma separated.
    #[arg(long)]
    mu_columns: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let overrides = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("preset", self.preset.clone()),
            ("count", self.count.map(|v| v.to_string())),
            ("data", path_str(&self.data)),
            ("trace", path_str(&self.trace)),
            ("out_dir", path_str(&self.out_dir)),
            ("tau_x", self.tau_x.clone()),
            ("tau_mu", self.tau_mu.map(|v| v.to_string())),
            ("dt", self.dt.map(|v| v.to_string())),
            ("max_time", self.max_time.map(|v| v.to_string())),
            ("kkt_tol", self.kkt_tol.clone()),
            ("record_every", self.record_every.map(|v| v.to_string())),
            ("blowup_bound", self.blowup_bound.map(|v| v.to_string())),
            ("plot", self.plot.then(|| "true".to_string())),
            ("quad_tol", self.quad_tol.map(|v| v.to_string())),
            ("mu_columns", self.mu_columns.clone()),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Generate { common, output } => commands::generate(&common.resolve()?, &output),
        Command::Train { common } => commands::train(&common.resolve()?),
        Command::Check { common, oracle, report } => commands::check(&common.resolve()?, oracle, report.as_deref()),
        Command::Plot { common } => commands::plot(&common.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("saddleflow: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

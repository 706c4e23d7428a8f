use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uwb_heading::pipeline::{self, Config, Estimator};
use uwb_heading::{Error, Exec};

/// Heading estimation from UWB range/RSS with GP measurements and an invariant EKF.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; missing sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate train and test datasets.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the sine and cosine heading GPs on a training dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training CSV produced by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Directory for the model files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Monte-Carlo filter evaluations on a test dataset.
    Run {
        #[command(flatten)]
        common: Common,
        /// Test CSV produced by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Model directory produced by `train` (required for gp-iekf).
        #[arg(long)]
        models: Option<PathBuf>,
        /// Estimators to run: gp-iekf, mag-iekf, deadreckon (repeatable or comma-separated).
        #[arg(long, value_delimiter = ',')]
        estimator: Vec<Estimator>,
        /// Monte-Carlo runs per estimator.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export plot-ready CSV tables from `run` outputs.
    Report {
        /// Directory containing `run` outputs.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(Config, Exec), Error> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.run.seed = seed;
    }
    let exec = if common.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    Ok((cfg, exec))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Generate { common, out } => {
            let (cfg, _) = load_config(&common)?;
            let [train, test] = pipeline::cmd_generate(&cfg, &out)?;
            println!("wrote {} and {}", show(&train), show(&test));
        }
        Command::Train { common, data, out } => {
            let (cfg, exec) = load_config(&common)?;
            let summary = pipeline::cmd_train(&data, &cfg.search, &out, exec)?;
            print_json(&summary.report)?;
        }
        Command::Run {
            common,
            data,
            models,
            estimator,
            runs,
            out,
        } => {
            let (cfg, exec) = load_config(&common)?;
            let mut run = cfg.run;
            if !estimator.is_empty() {
                run.estimators = estimator;
            }
            if let Some(r) = runs {
                run.monte_carlo_runs = r;
            }
            let reports = pipeline::cmd_run(&data, models.as_deref(), &run, &out, exec)?;
            print_json(&reports)?;
        }
        Command::Report { traces, out } => {
            let files = pipeline::cmd_report(&traces, &out)?;
            for p in files.error_bounds.iter().chain(&files.mahalanobis) {
                println!("wrote {}", show(p));
            }
            println!("wrote {}", show(&files.abs_error));
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::NotSkew(_)
        | Error::NotRotation { .. }
        | Error::NonFinite(_)
        | Error::DimensionMismatch { .. }
        | Error::Data { .. }
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::IllConditioned { .. }
        | Error::Unfittable
        | Error::DegeneratePrediction { .. }
        | Error::NumericalFailure { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

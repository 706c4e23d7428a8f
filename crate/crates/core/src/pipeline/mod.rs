//! End-to-end orchestration behind the `generate`, `train`, `run` and
//! `report` subcommands.

mod config;
mod report;
mod run;

pub use config::{derive_seed, Config, Estimator, GenerateConfig, RunConfig};
pub use report::{cmd_report, read_summary, ReportFiles};
pub use run::{
    evaluate_gp, prepare_measurements, run_estimator, run_filter, EpochSummary, EstimatorRun,
    GpPredictionReport, MetricsReport, RunTrace,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gp::HyperparamSearchConfig;
use crate::heading::{train_heading_gps, HeadingGpPair, TrainingReport};
use crate::sim::{build_dataset, generate_trajectory, Dataset, SensorNoiseConfig};

const TRAIN_TRAJECTORY: u64 = 1;
const TEST_TRAJECTORY: u64 = 2;
const TRAIN_NOISE: u64 = 3;
const TEST_NOISE: u64 = 4;

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const TRAINING_SUMMARY_FILE: &str = "training_summary.json";

/// Train and test datasets from one world, on different trajectories and
/// independent noise streams.
pub fn generate_datasets(cfg: &Config) -> Result<(Dataset, Dataset)> {
    let g = &cfg.generate;
    let make = |duration: f64, profile, traj_stream, noise_stream| -> Result<Dataset> {
        let traj_seed = derive_seed(cfg.seed, traj_stream);
        let traj = generate_trajectory(&cfg.world.area, duration, g.rate_hz, profile, traj_seed)?;
        let noise = SensorNoiseConfig {
            seed: derive_seed(cfg.seed, noise_stream),
            ..cfg.noise.clone()
        };
        build_dataset(&traj, &cfg.world, &noise, traj_seed, Some(profile))
    };
    let train = make(
        g.train_duration,
        g.train_profile,
        TRAIN_TRAJECTORY,
        TRAIN_NOISE,
    )?;
    let test = make(g.test_duration, g.test_profile, TEST_TRAJECTORY, TEST_NOISE)?;
    Ok((train, test))
}

/// Writes `train.csv` and `test.csv` (plus metadata) into `out`.
pub fn cmd_generate(cfg: &Config, out: &Path) -> Result<[PathBuf; 2]> {
    fs::create_dir_all(out)?;
    let (train, test) = generate_datasets(cfg)?;
    let paths = [out.join(TRAIN_FILE), out.join(TEST_FILE)];
    train.write(&paths[0])?;
    test.write(&paths[1])?;
    Ok(paths)
}

pub fn train_models(
    train: &Dataset,
    search: &HyperparamSearchConfig,
    exec: Exec,
) -> Result<(HeadingGpPair, TrainingReport)> {
    if train.records.len() < 2 {
        return Err(Error::InvalidArgument(
            "training dataset needs at least 2 rows".into(),
        ));
    }
    let records = train
        .records
        .iter()
        .map(|r| Ok((r.feature()?, r.gt_angle())))
        .collect::<Result<Vec<_>>>()?;
    train_heading_gps(&records, &train.meta.anchor_ids(), search, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummaryFile {
    pub report: TrainingReport,
    pub capped: bool,
    pub search: HyperparamSearchConfig,
}

pub fn cmd_train(
    train_csv: &Path,
    search: &HyperparamSearchConfig,
    out: &Path,
    exec: Exec,
) -> Result<TrainingSummaryFile> {
    let ds = Dataset::read(train_csv)?;
    let (pair, report) = train_models(&ds, search, exec)?;
    pair.save(out)?;
    let summary = TrainingSummaryFile {
        capped: report.sin.n_used < report.sin.n_input,
        report,
        search: search.clone(),
    };
    fs::write(
        out.join(TRAINING_SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn trace_path(dir: &Path, e: Estimator) -> PathBuf {
    dir.join(format!("trace_{}.csv", e.name()))
}

pub fn summary_path(dir: &Path, e: Estimator) -> PathBuf {
    dir.join(format!("summary_{}.csv", e.name()))
}

pub fn metrics_path(dir: &Path, e: Estimator) -> PathBuf {
    dir.join(format!("metrics_{}.json", e.name()))
}

/// Writes per-run traces, per-epoch ensemble summaries and the metrics report.
pub fn write_run_outputs(run: &EstimatorRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(trace_path(dir, run.estimator))?;
    w.write_record(["run", "t", "error_deg", "sigma3_deg", "mahalanobis", "nees"])?;
    for (r, tr) in run.traces.iter().enumerate() {
        for (k, t) in run.times.iter().enumerate() {
            let nees = (tr.error[k] / tr.sigma[k]).powi(2);
            w.write_record([
                r.to_string(),
                t.to_string(),
                tr.error[k].to_degrees().to_string(),
                (3.0 * tr.sigma[k]).to_degrees().to_string(),
                tr.mahalanobis[k].to_string(),
                nees.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(summary_path(dir, run.estimator))?;
    w.write_record(report::SUMMARY_COLUMNS)?;
    for s in run.epoch_summaries() {
        w.write_record(
            [
                s.t,
                s.mean_error_deg,
                s.rms_error_deg,
                s.mean_abs_error_deg,
                s.mean_3sigma_deg,
                s.mean_mahalanobis,
                s.mean_nees,
            ]
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    fs::write(
        metrics_path(dir, run.estimator),
        serde_json::to_string_pretty(&run.report)?,
    )?;
    Ok(())
}

/// Runs every configured estimator on `test_csv` and writes outputs to `out`.
pub fn cmd_run(
    test_csv: &Path,
    models_dir: Option<&Path>,
    cfg: &RunConfig,
    out: &Path,
    exec: Exec,
) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let test = Dataset::read(test_csv)?;
    let needs_models = cfg.estimators.contains(&Estimator::GpIekf);
    let models = match (needs_models, models_dir) {
        (true, Some(dir)) => Some(HeadingGpPair::load(dir)?),
        (true, None) => return Err(Error::InvalidArgument("gp-iekf requires --models".into())),
        (false, _) => None,
    };
    let mut reports = Vec::new();
    for &e in &cfg.estimators {
        let run = run_estimator(&test, e, models.as_ref(), cfg, exec)?;
        write_run_outputs(&run, out)?;
        reports.push(run.report);
    }
    if let Some(pair) = &models {
        let gp = evaluate_gp(pair, &test, exec)?;
        fs::write(
            out.join("gp_prediction.json"),
            serde_json::to_string_pretty(&gp)?,
        )?;
    }
    Ok(reports)
}

//! Monte-Carlo filter evaluation over a test dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, Estimator, RunConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::heading::{normalize, HeadingGpPair, HeadingMeasurement};
use crate::iekf::{self, mahalanobis_bound, FilterState, GyroSample, ProcessNoise};
use crate::sim::Dataset;
use crate::so2::Rot2;

/// Smallest filter PSD used when the dataset reports a noiseless gyro.
const MIN_Q_C: f64 = 1e-12;

/// Per-epoch quantities of one Monte-Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Left-invariant heading error `log(Cᵀ Ĉ)`, rad.
    pub error: Vec<f64>,
    /// Posterior standard deviation, rad.
    pub sigma: Vec<f64>,
    /// Innovation `z²/S`; NaN at epochs without a correction.
    pub mahalanobis: Vec<f64>,
}

impl RunTrace {
    /// Error-based NEES `e²/P̂` at each epoch.
    pub fn nees(&self) -> impl Iterator<Item = f64> + '_ {
        self.error
            .iter()
            .zip(&self.sigma)
            .map(|(e, s)| (e / s).powi(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub estimator: Estimator,
    pub runs: usize,
    pub epochs: usize,
    pub test_duration: f64,
    pub rmse_deg: f64,
    /// Mean of 3σ over the steady-state window, degrees.
    pub mean_3sigma_deg: f64,
    /// Share of corrections with `z²/S` within the bound; `None` without corrections.
    pub nees_within_bound_frac: Option<f64>,
    /// Share of post-transient epochs with `|e| < 3σ`.
    pub error_within_3sigma_frac: f64,
    /// Share of epochs with `e²/P̂` within the bound.
    pub error_nees_within_bound_frac: f64,
    pub mahalanobis_bound: f64,
    /// Epochs whose measurement was unusable (degenerate GP output).
    pub skipped_measurements: usize,
    /// Corrections rejected by gating, summed over runs.
    pub gated_corrections: usize,
}

#[derive(Debug, Clone)]
pub struct EstimatorRun {
    pub estimator: Estimator,
    pub times: Vec<f64>,
    pub traces: Vec<RunTrace>,
    pub report: MetricsReport,
}

/// Ensemble statistics at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub t: f64,
    pub mean_error_deg: f64,
    pub rms_error_deg: f64,
    pub mean_abs_error_deg: f64,
    pub mean_3sigma_deg: f64,
    pub mean_mahalanobis: f64,
    pub mean_nees: f64,
}

impl EstimatorRun {
    pub fn epoch_summaries(&self) -> Vec<EpochSummary> {
        let r = self.traces.len() as f64;
        self.times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let errs = self.traces.iter().map(|tr| tr.error[k].to_degrees());
                let (mut sum, mut sq, mut abs) = (0.0, 0.0, 0.0);
                for e in errs {
                    sum += e;
                    sq += e * e;
                    abs += e.abs();
                }
                let maha: Vec<f64> = self
                    .traces
                    .iter()
                    .map(|tr| tr.mahalanobis[k])
                    .filter(|m| m.is_finite())
                    .collect();
                EpochSummary {
                    t,
                    mean_error_deg: sum / r,
                    rms_error_deg: (sq / r).sqrt(),
                    mean_abs_error_deg: abs / r,
                    mean_3sigma_deg: self
                        .traces
                        .iter()
                        .map(|tr| 3.0 * tr.sigma[k].to_degrees())
                        .sum::<f64>()
                        / r,
                    mean_mahalanobis: if maha.is_empty() {
                        f64::NAN
                    } else {
                        maha.iter().sum::<f64>() / maha.len() as f64
                    },
                    mean_nees: self
                        .traces
                        .iter()
                        .map(|tr| (tr.error[k] / tr.sigma[k]).powi(2))
                        .sum::<f64>()
                        / r,
                }
            })
            .collect()
    }
}

/// Measurements available at each epoch for `estimator`.
pub fn prepare_measurements(
    test: &Dataset,
    estimator: Estimator,
    models: Option<&HeadingGpPair>,
    cfg: &RunConfig,
    exec: Exec,
) -> Result<Vec<Option<HeadingMeasurement>>> {
    match estimator {
        Estimator::DeadReckon => Ok(vec![None; test.records.len()]),
        Estimator::MagIekf => {
            let var = cfg.mag_var.unwrap_or(test.meta.noise.mag_std.powi(2));
            if !(var.is_finite() && var > 0.0) {
                return Err(Error::InvalidArgument(
                    "mag-iekf needs a positive magnetometer variance (set run.mag_var)".into(),
                ));
            }
            test.records
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let m = r.mag_heading.ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "mag-iekf: no magnetometer value at epoch {k}"
                        ))
                    })?;
                    Ok(Some(HeadingMeasurement {
                        y: Rot2::exp(m),
                        r_theta: var,
                    }))
                })
                .collect()
        }
        Estimator::GpIekf => {
            let pair = models
                .ok_or_else(|| Error::InvalidArgument("gp-iekf requires trained models".into()))?;
            if pair.anchor_ids() != test.meta.anchor_ids().as_slice() {
                return Err(Error::InvalidArgument(
                    "model anchor order does not match the dataset".into(),
                ));
            }
            let features = test.features()?;
            pair.predict_batch(&features, exec)
                .into_iter()
                .map(|p| match p.and_then(|pt| normalize(&pt)) {
                    Ok(m) => Ok(Some(m)),
                    Err(Error::DegeneratePrediction { .. }) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect()
        }
    }
}

/// Runs one filter pass: correct at epoch 0, then predict with the previous
/// epoch's gyro rate and correct at each following epoch.
pub fn run_filter(
    test: &Dataset,
    measurements: &[Option<HeadingMeasurement>],
    initial: FilterState,
    noise: ProcessNoise,
    gate: Option<f64>,
) -> Result<(RunTrace, usize)> {
    let n = test.records.len();
    let mut trace = RunTrace {
        error: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        mahalanobis: Vec::with_capacity(n),
    };
    let mut gated = 0;
    let mut state = initial;
    for (k, rec) in test.records.iter().enumerate() {
        if k > 0 {
            let prev = &test.records[k - 1];
            let g = GyroSample::new(prev.gyro, rec.t - prev.t)
                .map_err(|_| Error::NumericalFailure { epoch: k })?;
            state = iekf::predict(&state, &g, &noise);
        }
        let mut maha = f64::NAN;
        if let Some(m) = &measurements[k] {
            let (next, stats) =
                iekf::correct(&state, m).map_err(|_| Error::NumericalFailure { epoch: k })?;
            maha = stats.mahalanobis;
            match gate {
                Some(b) if stats.mahalanobis > b => gated += 1,
                _ => state = next,
            }
        }
        let err = (Rot2::exp(rec.gt_heading).inverse() * state.x).log();
        if !(err.is_finite() && state.p.is_finite() && state.p > 0.0) {
            return Err(Error::NumericalFailure { epoch: k });
        }
        trace.error.push(err);
        trace.sigma.push(state.sigma());
        trace.mahalanobis.push(maha);
    }
    Ok((trace, gated))
}

pub fn run_estimator(
    test: &Dataset,
    estimator: Estimator,
    models: Option<&HeadingGpPair>,
    cfg: &RunConfig,
    exec: Exec,
) -> Result<EstimatorRun> {
    cfg.validate()?;
    let measurements = prepare_measurements(test, estimator, models, cfg, exec)?;
    let q_c = cfg.q_c.unwrap_or(test.meta.noise.gyro_psd).max(MIN_Q_C);
    let noise = ProcessNoise::new(q_c)?;
    let bound = mahalanobis_bound(cfg.gate_confidence, 1)?;
    let gate = cfg.gating.then_some(bound);
    let gt0 = test.records[0].gt_heading;
    let init_sd = cfg.init_error_var.sqrt();

    let results = exec.map_range(cfg.monte_carlo_runs, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
        let dx: f64 = rng.sample(StandardNormal);
        let initial = FilterState::new(Rot2::exp(gt0 + init_sd * dx), cfg.init_error_var)?;
        run_filter(test, &measurements, initial, noise, gate)
    });
    let mut traces = Vec::with_capacity(results.len());
    let mut gated = 0;
    for res in results {
        let (t, g) = res?;
        traces.push(t);
        gated += g;
    }
    let times: Vec<f64> = test.records.iter().map(|r| r.t).collect();
    let skipped = match estimator {
        Estimator::DeadReckon => 0,
        _ => measurements.iter().filter(|m| m.is_none()).count(),
    };
    let report = summarize(
        estimator,
        &times,
        &traces,
        cfg,
        bound,
        test.duration(),
        skipped,
        gated,
    );
    Ok(EstimatorRun {
        estimator,
        times,
        traces,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    estimator: Estimator,
    times: &[f64],
    traces: &[RunTrace],
    cfg: &RunConfig,
    bound: f64,
    test_duration: f64,
    skipped_measurements: usize,
    gated_corrections: usize,
) -> MetricsReport {
    let n = times.len();
    let steady_start = ((1.0 - cfg.steady_fraction) * n as f64).floor() as usize;
    let transient_end = ((cfg.transient_fraction * n as f64).ceil() as usize).min(n - 1);

    let mut sq = 0.0;
    let mut count = 0usize;
    let mut sigma_sum = 0.0;
    let mut sigma_count = 0usize;
    let (mut within3, mut post) = (0usize, 0usize);
    let (mut nis_ok, mut nis_n) = (0usize, 0usize);
    let mut nees_ok = 0usize;
    for tr in traces {
        for k in 0..n {
            let e = tr.error[k];
            sq += e * e;
            count += 1;
            if k >= steady_start {
                sigma_sum += 3.0 * tr.sigma[k];
                sigma_count += 1;
            }
            if k >= transient_end {
                post += 1;
                if e.abs() < 3.0 * tr.sigma[k] {
                    within3 += 1;
                }
            }
            let m = tr.mahalanobis[k];
            if m.is_finite() {
                nis_n += 1;
                if m <= bound {
                    nis_ok += 1;
                }
            }
            if (e / tr.sigma[k]).powi(2) <= bound {
                nees_ok += 1;
            }
        }
    }
    MetricsReport {
        estimator,
        runs: traces.len(),
        epochs: n,
        test_duration,
        rmse_deg: (sq / count as f64).sqrt().to_degrees(),
        mean_3sigma_deg: (sigma_sum / sigma_count.max(1) as f64).to_degrees(),
        nees_within_bound_frac: (nis_n > 0).then(|| nis_ok as f64 / nis_n as f64),
        error_within_3sigma_frac: within3 as f64 / post.max(1) as f64,
        error_nees_within_bound_frac: nees_ok as f64 / count as f64,
        mahalanobis_bound: bound,
        skipped_measurements,
        gated_corrections,
    }
}

/// Quality of the raw GP outputs on a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPredictionReport {
    pub sin_rmse: f64,
    pub cos_rmse: f64,
    pub sin_mean_3sigma: f64,
    pub cos_mean_3sigma: f64,
    /// RMSE of the normalized heading, degrees, over non-degenerate epochs.
    pub heading_rmse_deg: f64,
    pub degenerate: usize,
    pub points: usize,
}

pub fn evaluate_gp(pair: &HeadingGpPair, ds: &Dataset, exec: Exec) -> Result<GpPredictionReport> {
    let features = ds.features()?;
    let preds = pair.predict_batch(&features, exec);
    let n = preds.len();
    let (mut ss, mut sc, mut vs, mut vc, mut sh) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0usize;
    for (p, rec) in preds.into_iter().zip(&ds.records) {
        let p = p?;
        let (s_true, c_true) = rec.gt_heading.sin_cos();
        ss += (p.s - s_true).powi(2);
        sc += (p.c - c_true).powi(2);
        vs += 3.0 * p.r_s.sqrt();
        vc += 3.0 * p.r_c.sqrt();
        match normalize(&p) {
            Ok(m) => {
                let e = (Rot2::exp(rec.gt_heading).inverse() * m.y).log();
                sh += e * e;
                used += 1;
            }
            Err(Error::DegeneratePrediction { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let nf = n as f64;
    Ok(GpPredictionReport {
        sin_rmse: (ss / nf).sqrt(),
        cos_rmse: (sc / nf).sqrt(),
        sin_mean_3sigma: vs / nf,
        cos_mean_3sigma: vc / nf,
        heading_rmse_deg: if used > 0 {
            (sh / used as f64).sqrt().to_degrees()
        } else {
            f64::NAN
        },
        degenerate: n - used,
        points: n,
    })
}

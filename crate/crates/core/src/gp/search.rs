//! Hyperparameter search: a log-space grid around data-derived heuristics,
//! then coordinate descent on the log marginal likelihood. Derivative-free
//! and fully deterministic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kernel::SeKernelParams;
use super::model::{lml_from_sq_dist, sq_dist_matrix, GpModel, TrainingSet};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperparamSearchConfig {
    /// Grid points per hyperparameter axis.
    pub grid_points: usize,
    /// Half-width of each grid axis in decades around its heuristic.
    pub grid_span_decades: f64,
    /// Rows used to score the grid (stride subsample of the training set).
    pub grid_subsample: usize,
    /// Training-set cap; larger sets are stride-subsampled before fitting.
    pub max_points: usize,
    /// Rows used by coordinate descent (stride subsample of the capped set).
    /// The final posterior always uses the whole capped set.
    pub refine_subsample: usize,
    /// Number of best grid points used as descent starts.
    pub refine_starts: usize,
    /// Initial coordinate-descent step, in natural-log units.
    pub initial_step: f64,
    pub min_step: f64,
    /// Likelihood evaluations allowed for coordinate descent, after the grid.
    pub max_evals: usize,
}

impl Default for HyperparamSearchConfig {
    fn default() -> Self {
        HyperparamSearchConfig {
            grid_points: 5,
            grid_span_decades: 1.0,
            grid_subsample: 256,
            max_points: 2000,
            refine_subsample: 1000,
            refine_starts: 3,
            initial_step: 0.5,
            min_step: 0.02,
            max_evals: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub params: SeKernelParams,
    pub log_marginal_likelihood: f64,
    /// Rows offered to the fit.
    pub n_input: usize,
    /// Rows kept after capping.
    pub n_used: usize,
    pub evaluations: usize,
}

struct Heuristics {
    center: [f64; 3],
    lower: [f64; 3],
    upper: [f64; 3],
}

fn median_pairwise_distance(d2: &DMatrix<f64>) -> f64 {
    let n = d2.nrows();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|j| ((j + 1)..n).map(move |i| (i, j)))
        .map(|(i, j)| d2[(i, j)].sqrt())
        .filter(|v| *v > 0.0)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

fn heuristics(
    train: &TrainingSet,
    d2_sub: &DMatrix<f64>,
    cfg: &HyperparamSearchConfig,
) -> Heuristics {
    let yc = train.centered_y();
    let std_y = (yc.norm_squared() / yc.len() as f64).sqrt();
    let scale_y = if std_y > 1e-9 { std_y } else { 1e-3 };
    let ell = median_pairwise_distance(d2_sub);
    let center = [scale_y.ln(), ell.ln(), (0.1 * scale_y).ln()];
    let margin = (cfg.grid_span_decades + 3.0) * std::f64::consts::LN_10;
    let mut lower = center.map(|c| c - margin);
    let upper = center.map(|c| c + margin);
    lower[2] = lower[2].max((1e-6 * scale_y).ln());
    Heuristics {
        center,
        lower,
        upper,
    }
}

/// Fits with the default execution mode.
pub fn fit(train: &TrainingSet, cfg: &HyperparamSearchConfig) -> Result<GpModel> {
    fit_with(train, cfg, Exec::default()).map(|(m, _)| m)
}

pub fn fit_with(
    train: &TrainingSet,
    cfg: &HyperparamSearchConfig,
    exec: Exec,
) -> Result<(GpModel, FitSummary)> {
    if train.n() < 2 {
        return Err(Error::InvalidArgument(
            "fit needs at least 2 training points".into(),
        ));
    }
    if cfg.grid_points == 0 || cfg.initial_step <= 0.0 || cfg.min_step <= 0.0 {
        return Err(Error::InvalidArgument(
            "bad hyperparameter search configuration".into(),
        ));
    }
    let n_input = train.n();
    let full = train.subsample(cfg.max_points);
    let sub = full.subsample(cfg.grid_subsample.max(2));
    let d2_sub = sq_dist_matrix(sub.x());
    let yc_sub = sub.centered_y();
    let h = heuristics(&full, &d2_sub, cfg);

    let g = cfg.grid_points;
    let offsets: Vec<f64> = (0..g)
        .map(|i| {
            if g == 1 {
                0.0
            } else {
                -cfg.grid_span_decades + 2.0 * cfg.grid_span_decades * i as f64 / (g - 1) as f64
            }
        })
        .map(|t| t * std::f64::consts::LN_10)
        .collect();
    let grid: Vec<[f64; 3]> = (0..g * g * g)
        .map(|idx| {
            let (a, b, c) = (idx / (g * g), (idx / g) % g, idx % g);
            [
                h.center[0] + offsets[a],
                h.center[1] + offsets[b],
                h.center[2] + offsets[c],
            ]
        })
        .collect();
    let grid_scores = exec.map(&grid, |ln| {
        lml_from_sq_dist(&d2_sub, &yc_sub, &SeKernelParams::from_log(*ln)).ok()
    });
    let mut evaluations = grid.len();

    let mut ranked: Vec<(f64, [f64; 3])> = grid_scores
        .iter()
        .zip(&grid)
        .filter_map(|(s, ln)| s.map(|s| (s, *ln)))
        .collect();
    if ranked.is_empty() {
        return Err(Error::Unfittable);
    }
    // Stable sort keeps grid order among ties.
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked.truncate(cfg.refine_starts.max(1));

    let refine = full.subsample(cfg.refine_subsample.max(2));
    let d2 = sq_dist_matrix(refine.x());
    let yc = refine.centered_y();
    let score = |ln: &[f64; 3]| lml_from_sq_dist(&d2, &yc, &SeKernelParams::from_log(*ln)).ok();

    let starts: Vec<[f64; 3]> = ranked.iter().map(|(_, ln)| *ln).collect();
    let start_scores = exec.map(&starts, score);
    evaluations += starts.len();
    let (mut best_ln, mut best) = starts
        .iter()
        .zip(start_scores)
        .filter_map(|(ln, s)| s.map(|s| (*ln, s)))
        .fold(None, |acc: Option<([f64; 3], f64)>, (ln, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((ln, s)),
        })
        .ok_or(Error::Unfittable)?;

    let budget = evaluations + cfg.max_evals;
    let mut step = cfg.initial_step;
    while step >= cfg.min_step && evaluations < budget {
        let mut improved = false;
        for dim in 0..3 {
            let candidates: Vec<[f64; 3]> = [step, -step]
                .iter()
                .map(|s| {
                    let mut c = best_ln;
                    c[dim] = (c[dim] + s).clamp(h.lower[dim], h.upper[dim]);
                    c
                })
                .filter(|c| c[dim] != best_ln[dim])
                .collect();
            let scores = exec.map(&candidates, score);
            evaluations += candidates.len();
            for (c, s) in candidates.iter().zip(scores) {
                if let Some(s) = s {
                    if s > best + 1e-12 * best.abs().max(1.0) {
                        best = s;
                        best_ln = *c;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let params = SeKernelParams::from_log(best_ln);
    let n_used = full.n();
    let model = GpModel::new(full, params)?;
    let summary = FitSummary {
        params,
        log_marginal_likelihood: model.log_marginal_likelihood(),
        n_input,
        n_used,
        evaluations,
    };
    Ok((model, summary))
}

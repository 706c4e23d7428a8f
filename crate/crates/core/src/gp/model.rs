use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{sq_dist, SeKernelParams};
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const MODEL_FORMAT: &str = "gp-se-v1";

/// Per-dimension affine map from raw features to zero-mean, unit-variance inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on the rows of `raw`. Constant columns get unit scale.
    pub fn fit(raw: &DMatrix<f64>) -> Self {
        let n = raw.nrows() as f64;
        let mut mean = Vec::with_capacity(raw.ncols());
        let mut scale = Vec::with_capacity(raw.ncols());
        for col in raw.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            scale.push(if s > 1e-12 * (1.0 + m.abs()) { s } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply_matrix(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: raw.ncols(),
            });
        }
        Ok(DMatrix::from_fn(raw.nrows(), raw.ncols(), |i, j| {
            (raw[(i, j)] - self.mean[j]) / self.scale[j]
        }))
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.scale.len() || self.mean.is_empty() {
            return Err(Error::InvalidArgument("malformed standardizer".into()));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(
                "standardizer scales must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Standardized inputs (rows are points) and raw targets.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    x: DMatrix<f64>,
    y: DVector<f64>,
    standardizer: Standardizer,
}

impl TrainingSet {
    /// Fits a standardizer to `raw` and applies it.
    pub fn new(raw: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let standardizer = Standardizer::fit(&raw);
        Self::with_standardizer(&raw, y, standardizer)
    }

    pub fn with_standardizer(
        raw: &DMatrix<f64>,
        y: DVector<f64>,
        standardizer: Standardizer,
    ) -> Result<Self> {
        if raw.nrows() == 0 || raw.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "training set must have n ≥ 1 and d ≥ 1".into(),
            ));
        }
        if raw.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.nrows(),
                got: y.len(),
            });
        }
        if raw.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data"));
        }
        standardizer.validate()?;
        let x = standardizer.apply_matrix(raw)?;
        Ok(TrainingSet { x, y, standardizer })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Standardized inputs.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn y_mean(&self) -> f64 {
        self.y.mean()
    }

    pub(crate) fn centered_y(&self) -> DVector<f64> {
        let m = self.y_mean();
        self.y.map(|v| v - m)
    }

    /// Keeps rows `floor(i·n/cap)`, `i < cap`, when `n > cap`.
    pub fn subsample(&self, cap: usize) -> TrainingSet {
        let n = self.n();
        if cap == 0 || n <= cap {
            return self.clone();
        }
        let idx: Vec<usize> = (0..cap).map(|i| i * n / cap).collect();
        self.select(&idx)
    }

    pub(crate) fn select(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            x: self.x.select_rows(idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            standardizer: self.standardizer.clone(),
        }
    }
}

pub(crate) fn sq_dist_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let xt = x.transpose();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        let cj = xt.column(j);
        for i in (j + 1)..n {
            let v: f64 = cj
                .iter()
                .zip(xt.column(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn noisy_gram(d2: &DMatrix<f64>, params: &SeKernelParams) -> DMatrix<f64> {
    let mut k = d2.map(|v| params.cov_at_sq_dist(v));
    let noise = params.sigma_n * params.sigma_n;
    for i in 0..k.nrows() {
        k[(i, i)] += noise;
    }
    k
}

/// Factors `k`, adding escalating diagonal jitter on failure.
/// Returns the factor and the jitter that was needed (0 if none).
pub(crate) fn cholesky_with_jitter(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let mean_diag = k.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::IllConditioned {
        jitter: JITTER_MAX * mean_diag,
    })
}

fn lml_terms(chol: &Cholesky<f64, Dyn>, yc: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = chol.solve(yc);
    let n = yc.len() as f64;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * yc.dot(&alpha) - log_det_half - 0.5 * n * (2.0 * PI).ln();
    (lml, alpha)
}

/// Log marginal likelihood from a precomputed squared-distance matrix and
/// centered targets.
pub(crate) fn lml_from_sq_dist(
    d2: &DMatrix<f64>,
    yc: &DVector<f64>,
    params: &SeKernelParams,
) -> Result<f64> {
    let (chol, _) = cholesky_with_jitter(noisy_gram(d2, params))?;
    let (lml, _) = lml_terms(&chol, yc);
    if lml.is_finite() {
        Ok(lml)
    } else {
        Err(Error::NonFinite("log marginal likelihood"))
    }
}

/// `log p(y | X, θ)` of the mean-centered targets under a zero-mean prior.
pub fn log_marginal_likelihood(train: &TrainingSet, params: &SeKernelParams) -> Result<f64> {
    params.validate()?;
    lml_from_sq_dist(&sq_dist_matrix(train.x()), &train.centered_y(), params)
}

/// A GP conditioned on its training set.
#[derive(Debug, Clone)]
pub struct GpModel {
    train: TrainingSet,
    params: SeKernelParams,
    y_mean: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

impl GpModel {
    pub fn new(train: TrainingSet, params: SeKernelParams) -> Result<Self> {
        params.validate()?;
        let (chol, jitter) = cholesky_with_jitter(noisy_gram(&sq_dist_matrix(train.x()), &params))?;
        let yc = train.centered_y();
        let (lml, alpha) = lml_terms(&chol, &yc);
        Ok(GpModel {
            y_mean: train.y_mean(),
            train,
            params,
            jitter,
            chol,
            alpha,
            lml,
        })
    }

    pub fn params(&self) -> &SeKernelParams {
        &self.params
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.train
    }

    pub fn dim(&self) -> usize {
        self.train.d()
    }

    pub fn n(&self) -> usize {
        self.train.n()
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    /// Diagonal jitter that was added to factor the covariance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower-triangular Cholesky factor of `K + (σ_n² + jitter)I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Posterior mean and latent variance at a raw (unstandardized) input.
    pub fn predict(&self, x_star: &[f64]) -> Result<(f64, f64)> {
        let z = self.train.standardizer().apply(x_star)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query"));
        }
        Ok(self.predict_standardized(&z))
    }

    /// Posterior mean and variance of a noisy observation (latent + σ_n²).
    pub fn predict_observation(&self, x_star: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.predict(x_star)?;
        Ok((m, v + self.params.sigma_n * self.params.sigma_n))
    }

    fn predict_standardized(&self, z: &[f64]) -> (f64, f64) {
        let x = self.train.x();
        let zr = nalgebra::RowDVector::from_row_slice(z);
        let kstar = DVector::from_fn(x.nrows(), |i, _| {
            self.params
                .cov_at_sq_dist(sq_dist(x.row(i).transpose().as_view(), &zr))
        });
        let mean = self.y_mean + kstar.dot(&self.alpha);
        let prior = self.params.sigma_f * self.params.sigma_f;
        let mut v = kstar;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let var = (prior - v.norm_squared()).clamp(0.0, prior);
        (mean, var)
    }

    pub fn to_file(&self) -> GpModelFile {
        let x = self.train.x();
        let mut flat = Vec::with_capacity(x.len());
        for i in 0..x.nrows() {
            flat.extend(x.row(i).iter());
        }
        GpModelFile {
            format: MODEL_FORMAT.to_string(),
            d: self.dim(),
            n: self.n(),
            standardizer: self.train.standardizer().clone(),
            params: self.params,
            y_mean: self.y_mean,
            jitter: self.jitter,
            x: flat,
            y: self.train.y().iter().copied().collect(),
            alpha: self.alpha.iter().copied().collect(),
        }
    }

    /// Rebuilds a model; the Cholesky factor is recomputed.
    pub fn from_file(f: GpModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unknown model format {:?}",
                f.format
            )));
        }
        if f.x.len() != f.n * f.d
            || f.y.len() != f.n
            || f.alpha.len() != f.n
            || f.standardizer.dim() != f.d
        {
            return Err(Error::InvalidArgument(
                "model file dimensions are inconsistent".into(),
            ));
        }
        f.params.validate()?;
        f.standardizer.validate()?;
        let x = DMatrix::from_row_slice(f.n, f.d, &f.x);
        let train = TrainingSet {
            x,
            y: DVector::from_vec(f.y),
            standardizer: f.standardizer,
        };
        let mut k = noisy_gram(&sq_dist_matrix(train.x()), &f.params);
        for i in 0..k.nrows() {
            k[(i, i)] += f.jitter;
        }
        let chol = Cholesky::new(k).ok_or(Error::IllConditioned { jitter: f.jitter })?;
        let alpha = DVector::from_vec(f.alpha);
        let yc = train.centered_y();
        let (lml, _) = lml_terms(&chol, &yc);
        Ok(GpModel {
            train,
            params: f.params,
            y_mean: f.y_mean,
            jitter: f.jitter,
            chol,
            alpha,
            lml,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: GpModelFile = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::data(path, e.to_string()))?;
        Self::from_file(f)
    }
}

/// On-disk form of a [`GpModel`]. Inputs are stored standardized, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModelFile {
    pub format: String,
    pub d: usize,
    pub n: usize,
    pub standardizer: Standardizer,
    pub params: SeKernelParams,
    pub y_mean: f64,
    pub jitter: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::gram_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TrainingSet {
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        TrainingSet::new(x, y).unwrap()
    }

    /// Dense inverse and LU determinant, no factorization reuse.
    fn dense_lml(train: &TrainingSet, p: &SeKernelParams) -> f64 {
        let n = train.n();
        let k = gram_matrix(train.x(), train.x(), p).unwrap()
            + DMatrix::identity(n, n) * p.sigma_n.powi(2);
        let yc = train.centered_y();
        let kinv = k.clone().try_inverse().unwrap();
        -0.5 * (yc.transpose() * kinv * &yc)[0]
            - 0.5 * k.determinant().ln()
            - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    #[test]
    fn lml_single_point_closed_form() {
        let train = TrainingSet::new(
            DMatrix::from_element(1, 3, 0.4),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        let p = SeKernelParams::new(0.8, 1.3, 0.3).unwrap();
        let tot = (0.64f64 + 0.09).sqrt();
        let expected = -tot.ln() - 0.5 * (2.0 * PI).ln();
        assert_relative_eq!(
            log_marginal_likelihood(&train, &p).unwrap(),
            expected,
            max_relative = 1e-13
        );
    }

    #[test]
    fn lml_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let train = random_set(&mut rng, 20, 3);
        let p = SeKernelParams::new(0.9, 1.1, 0.2).unwrap();
        let fast = log_marginal_likelihood(&train, &p).unwrap();
        assert!((fast - dense_lml(&train, &p)).abs() < 1e-8);
    }

    #[test]
    fn lml_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = random_set(&mut rng, 15, 2);
        let p = SeKernelParams::new(1.0, 0.7, 0.3).unwrap();
        let perm: Vec<usize> = (0..15).rev().collect();
        let a = log_marginal_likelihood(&train, &p).unwrap();
        let b = log_marginal_likelihood(&train.select(&perm), &p).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = random_set(&mut rng, 30, 4);
        let p = SeKernelParams::new(1.2, 1.5, 0.1).unwrap();
        let model = GpModel::new(train.clone(), p).unwrap();
        let l = model.cholesky_factor();
        let k = gram_matrix(train.x(), train.x(), &p).unwrap() + DMatrix::identity(30, 30) * 0.01;
        let err = (&l * l.transpose() - &k).abs().max();
        assert!(err < 1e-8 * k.norm());
        let resid = (k * model.alpha() - train.centered_y()).abs().max();
        assert!(resid < 1e-8);
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let train = TrainingSet::new(x, y).unwrap();
        let p = SeKernelParams::new(1.0, 1.0, 1e-12).unwrap();
        let model = GpModel::new(train, p).unwrap();
        assert!(model.jitter() > 0.0);
    }

    #[test]
    fn isolated_point_posterior_mean() {
        // Outputs are centered, so the scalar closed form σ_f²·y₁/(σ_f² + σ_n²)
        // applies to y₁ − ȳ. A second, remote point decouples the two rows of K.
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1e3]);
        let y = DVector::from_vec(vec![0.7, -0.3]);
        let train = TrainingSet::new(x, y).unwrap();
        let p = SeKernelParams::new(1.5, 0.05, 0.4).unwrap();
        let model = GpModel::new(train, p).unwrap();
        let (m, v) = model.predict(&[0.0]).unwrap();
        let ybar = 0.2;
        assert_relative_eq!(
            m,
            ybar + 2.25 * (0.7 - ybar) / (2.25 + 0.16),
            max_relative = 1e-12
        );
        let expected_var = 2.25 - 2.25 * 2.25 / (2.25 + 0.16);
        assert_relative_eq!(v, expected_var, max_relative = 1e-12);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let train = random_set(&mut rng, 25, 2);
        let p = SeKernelParams::new(0.6, 0.5, 0.1).unwrap();
        let model = GpModel::new(train.clone(), p).unwrap();
        let (m, v) = model.predict(&[1e4, -1e4]).unwrap();
        assert!((m - train.y_mean()).abs() < 1e-12);
        assert_relative_eq!(v, 0.36, max_relative = 1e-12);
        assert!(model.predict(&[0.0]).is_err());
    }

    #[test]
    fn subsample_uses_stride() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let y = DVector::from_fn(10, |i, _| i as f64);
        let train = TrainingSet::new(x, y).unwrap();
        let sub = train.subsample(4);
        assert_eq!(sub.y().as_slice(), &[0.0, 2.0, 5.0, 7.0]);
        assert_eq!(train.subsample(20).n(), 10);
    }

    #[test]
    fn model_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let train = random_set(&mut rng, 40, 5);
        let model = GpModel::new(train, SeKernelParams::new(0.8, 1.2, 0.15).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gp.json");
        model.save(&path).unwrap();
        let back = GpModel::load(&path).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
            let (m0, v0) = model.predict(&q).unwrap();
            let (m1, v1) = back.predict(&q).unwrap();
            assert!((m0 - m1).abs() < 1e-10 && (v0 - v1).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn posterior_variance_is_bounded(seed in 0u64..1000, n in 1usize..30, q in prop::array::uniform3(-3.0f64..3.0)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train = random_set(&mut rng, n, 3);
            let p = SeKernelParams::new(0.7, 0.8, 1e-3).unwrap();
            let model = GpModel::new(train, p).unwrap();
            let (_, v) = model.predict(&q).unwrap();
            prop_assert!((0.0..=0.49 + 1e-9).contains(&v));
        }

        #[test]
        fn extra_point_never_increases_variance(seed in 0u64..1000, n in 1usize..25, q in prop::array::uniform2(-2.5f64..2.5)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = DMatrix::from_fn(n + 1, 2, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(n + 1, |_, _| rng.random_range(-1.0..1.0));
            // Shared standardizer so both sets live in the same input space.
            let std = Standardizer::fit(&raw);
            let big = TrainingSet::with_standardizer(&raw, y.clone(), std.clone()).unwrap();
            let small =
                TrainingSet::with_standardizer(&raw.rows(0, n).into_owned(), y.rows(0, n).into_owned(), std).unwrap();
            let p = SeKernelParams::new(1.0, 0.6, 1e-3).unwrap();
            let (_, v_small) = GpModel::new(small, p).unwrap().predict(&q).unwrap();
            let (_, v_big) = GpModel::new(big, p).unwrap().predict(&q).unwrap();
            prop_assert!(v_big <= v_small + 1e-9, "{v_big} > {v_small}");
        }
    }
}

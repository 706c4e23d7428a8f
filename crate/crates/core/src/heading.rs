//! Heading measurements from a pair of GPs regressing sin and cos of heading.
//!
//! The two GP outputs are unconstrained "pseudo" trigonometric values. They
//! are projected onto the unit circle to form an SO(2) element, and their
//! variances are pushed through a first-order expansion of that projection.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gp::{fit_with, FitSummary, GpModel, HyperparamSearchConfig, TrainingSet};
use crate::so2::{vee_raw, Angle, Rot2};

/// Radius of the disc around the origin where normalization is refused.
pub const EPS_NORM: f64 = 1e-3;
/// Floor on GP output variances and on the projected heading variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const MANIFEST_FORMAT: &str = "heading-gp-pair-v1";
const SIN_FILE: &str = "gp_sin.json";
const COS_FILE: &str = "gp_cos.json";
const MANIFEST_FILE: &str = "manifest.json";

/// Ranges (m) and RSS (dBi) to each anchor, in anchor-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct UwbFeature {
    pub ranges: Vec<f64>,
    pub rss: Vec<f64>,
}

impl UwbFeature {
    pub fn new(ranges: Vec<f64>, rss: Vec<f64>) -> Result<Self> {
        if ranges.len() != rss.len() || ranges.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: ranges.len(),
                got: rss.len(),
            });
        }
        if ranges.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidArgument(
                "ranges must be finite and positive".into(),
            ));
        }
        if rss.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rss"));
        }
        Ok(UwbFeature { ranges, rss })
    }

    pub fn anchors(&self) -> usize {
        self.ranges.len()
    }

    /// `[range_0 … range_{m-1}, rss_0 … rss_{m-1}]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.ranges.iter().chain(&self.rss).copied().collect()
    }
}

/// Raw GP outputs for sin and cos of heading with their variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoTrig {
    pub s: f64,
    pub c: f64,
    pub r_s: f64,
    pub r_c: f64,
}

/// An SO(2) heading observation and its variance (rad²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingMeasurement {
    pub y: Rot2,
    pub r_theta: f64,
}

/// Projects `(s, c)` onto SO(2) and linearizes the variance of the result.
///
/// With `a = s̄² + c̄²`, the first-order expansion of `1/√a` gives
/// `α₁ = a^{-1/2}`, `α₂ = −c̄ a^{-3/2}`, `α₃ = −s̄ a^{-3/2}`, and the
/// perturbation of `Y = (c·1 + s·Ω)/√a` splits into
/// `D = (α₁ + α₂c̄)1 + α₂s̄Ω` (from δc) and `E = (α₁ + α₃s̄)Ω + α₃c̄1` (from δs).
pub fn normalize(pt: &PseudoTrig) -> Result<HeadingMeasurement> {
    let PseudoTrig { s, c, r_s, r_c } = *pt;
    if !(s.is_finite() && c.is_finite() && r_s.is_finite() && r_c.is_finite()) {
        return Err(Error::NonFinite("pseudo-trig prediction"));
    }
    let norm = s.hypot(c);
    if norm < EPS_NORM {
        return Err(Error::DegeneratePrediction { norm });
    }
    let y = Rot2::from_cos_sin(c / norm, s / norm);

    let a = norm * norm;
    let a32 = a * norm;
    let alpha1 = 1.0 / norm;
    let alpha2 = -c / a32;
    let alpha3 = -s / a32;
    let ident = Matrix2::identity();
    let omega = Matrix2::new(0.0, -1.0, 1.0, 0.0);
    let d = ident * (alpha1 + alpha2 * c) + omega * (alpha2 * s);
    let e = omega * (alpha1 + alpha3 * s) + ident * (alpha3 * c);
    let yt = y.matrix().transpose();
    let jc = vee_raw(&(-yt * d));
    let js = vee_raw(&(-yt * e));
    let r_theta = (jc * jc * r_c + js * js * r_s).max(VARIANCE_FLOOR);
    Ok(HeadingMeasurement { y, r_theta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub sin: FitSummary,
    pub cos: FitSummary,
    /// RMSE of each GP's posterior mean at its own training inputs.
    pub residual_rmse_sin: f64,
    pub residual_rmse_cos: f64,
}

/// Two independently fitted GPs over a shared standardized feature space.
#[derive(Debug, Clone)]
pub struct HeadingGpPair {
    gp_sin: GpModel,
    gp_cos: GpModel,
    anchor_ids: Vec<u32>,
    eps_norm: f64,
    include_noise: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    anchor_ids: Vec<u32>,
    eps_norm: f64,
    include_noise_variance: bool,
    gp_sin: String,
    gp_cos: String,
}

/// Fits `gp_sin` to `sin θᵢ` and `gp_cos` to `cos θᵢ`.
pub fn train_heading_gps(
    records: &[(UwbFeature, Angle)],
    anchor_ids: &[u32],
    search: &HyperparamSearchConfig,
    exec: Exec,
) -> Result<(HeadingGpPair, TrainingReport)> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 training records".into(),
        ));
    }
    let m = records[0].0.anchors();
    if anchor_ids.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: anchor_ids.len(),
        });
    }
    let n = records.len();
    let mut raw = DMatrix::zeros(n, 2 * m);
    for (i, (f, _)) in records.iter().enumerate() {
        if f.anchors() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: f.anchors(),
            });
        }
        for (j, v) in f.to_vec().into_iter().enumerate() {
            raw[(i, j)] = v;
        }
    }
    let sin = DVector::from_iterator(n, records.iter().map(|(_, a)| a.radians().sin()));
    let cos = DVector::from_iterator(n, records.iter().map(|(_, a)| a.radians().cos()));
    let sin_set = TrainingSet::new(raw.clone(), sin)?;
    let cos_set = TrainingSet::with_standardizer(&raw, cos, sin_set.standardizer().clone())?;

    let (gp_sin, sin_summary) = fit_with(&sin_set, search, exec)?;
    let (gp_cos, cos_summary) = fit_with(&cos_set, search, exec)?;
    let pair = HeadingGpPair {
        gp_sin,
        gp_cos,
        anchor_ids: anchor_ids.to_vec(),
        eps_norm: EPS_NORM,
        include_noise: true,
    };
    let report = TrainingReport {
        residual_rmse_sin: residual_rmse(&pair.gp_sin, exec),
        residual_rmse_cos: residual_rmse(&pair.gp_cos, exec),
        sin: sin_summary,
        cos: cos_summary,
    };
    Ok((pair, report))
}

fn residual_rmse(gp: &GpModel, exec: Exec) -> f64 {
    let train = gp.training_set();
    let sd = train.standardizer();
    let sq = exec.map_range(train.n(), |i| {
        let raw: Vec<f64> = train
            .x()
            .row(i)
            .iter()
            .zip(sd.mean.iter().zip(&sd.scale))
            .map(|(z, (m, s))| z * s + m)
            .collect();
        let (mean, _) = gp.predict(&raw).expect("training row has model dimension");
        (mean - train.y()[i]).powi(2)
    });
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

impl HeadingGpPair {
    pub fn gp_sin(&self) -> &GpModel {
        &self.gp_sin
    }

    pub fn gp_cos(&self) -> &GpModel {
        &self.gp_cos
    }

    pub fn anchor_ids(&self) -> &[u32] {
        &self.anchor_ids
    }

    /// Whether output variances include the fitted observation noise σ_n².
    /// On by default: the filter consumes the GP output as a noisy observation.
    pub fn includes_noise_variance(&self) -> bool {
        self.include_noise
    }

    pub fn with_noise_variance(mut self, include: bool) -> Self {
        self.include_noise = include;
        self
    }

    pub fn predict_pseudo_trig(&self, f: &UwbFeature) -> Result<PseudoTrig> {
        let x = f.to_vec();
        let predict = |gp: &GpModel| {
            if self.include_noise {
                gp.predict_observation(&x)
            } else {
                gp.predict(&x)
            }
        };
        let (s, r_s) = predict(&self.gp_sin)?;
        let (c, r_c) = predict(&self.gp_cos)?;
        Ok(PseudoTrig {
            s,
            c,
            r_s: r_s.max(VARIANCE_FLOOR),
            r_c: r_c.max(VARIANCE_FLOOR),
        })
    }

    /// Pseudo-trig prediction followed by [`normalize`], honoring this
    /// pair's degenerate-disc radius.
    pub fn predict_measurement(&self, f: &UwbFeature) -> Result<HeadingMeasurement> {
        let pt = self.predict_pseudo_trig(f)?;
        let norm = pt.s.hypot(pt.c);
        if norm < self.eps_norm {
            return Err(Error::DegeneratePrediction { norm });
        }
        normalize(&pt)
    }

    pub fn predict_batch(&self, features: &[UwbFeature], exec: Exec) -> Vec<Result<PseudoTrig>> {
        exec.map(features, |f| self.predict_pseudo_trig(f))
    }

    /// Writes `manifest.json`, `gp_sin.json` and `gp_cos.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.gp_sin.save(&dir.join(SIN_FILE))?;
        self.gp_cos.save(&dir.join(COS_FILE))?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            anchor_ids: self.anchor_ids.clone(),
            eps_norm: self.eps_norm,
            include_noise_variance: self.include_noise,
            gp_sin: SIN_FILE.into(),
            gp_cos: COS_FILE.into(),
        };
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::data(&path, e.to_string()))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::data(
                &path,
                format!("unknown format {:?}", manifest.format),
            ));
        }
        let gp_sin = GpModel::load(&dir.join(&manifest.gp_sin))?;
        let gp_cos = GpModel::load(&dir.join(&manifest.gp_cos))?;
        if gp_sin.dim() != gp_cos.dim() || gp_sin.dim() != 2 * manifest.anchor_ids.len() {
            return Err(Error::data(
                &path,
                "model dimensions disagree with anchor list",
            ));
        }
        Ok(HeadingGpPair {
            gp_sin,
            gp_cos,
            anchor_ids: manifest.anchor_ids,
            eps_norm: manifest.eps_norm,
            include_noise: manifest.include_noise_variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pt(s: f64, c: f64, r_s: f64, r_c: f64) -> PseudoTrig {
        PseudoTrig { s, c, r_s, r_c }
    }

    #[test]
    fn normalize_at_identity() {
        let m = normalize(&pt(0.0, 1.0, 0.04, 0.09)).unwrap();
        assert_eq!(m.y, Rot2::identity());
        assert_relative_eq!(m.r_theta, 0.04, max_relative = 1e-14);
    }

    #[test]
    fn normalize_at_quarter_turn() {
        for r_s in [1e-4, 0.3, 5.0] {
            let m = normalize(&pt(1.0, 0.0, r_s, 0.09)).unwrap();
            assert!((m.y.matrix() - Rot2::exp(FRAC_PI_2).matrix()).abs().max() < 1e-15);
            assert_relative_eq!(m.r_theta, 0.09, max_relative = 1e-14);
        }
    }

    #[test]
    fn normalize_radial_scaling() {
        let a = normalize(&pt(1.0, 0.0, 0.01, 0.09)).unwrap();
        let b = normalize(&pt(2.0, 0.0, 0.01, 0.09)).unwrap();
        assert_eq!(a.y, b.y);
        assert_relative_eq!(b.r_theta, a.r_theta / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert!(matches!(
            normalize(&pt(1e-4, -5e-4, 0.1, 0.1)),
            Err(Error::DegeneratePrediction { .. })
        ));
        assert!(normalize(&pt(f64::NAN, 1.0, 0.1, 0.1)).is_err());
    }

    #[test]
    fn variance_floor_applies() {
        let m = normalize(&pt(0.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(m.r_theta, VARIANCE_FLOOR);
    }

    #[test]
    fn linearized_variance_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.05).unwrap();
        for k in 0..8 {
            let th = -PI + (k as f64 + 0.5) * PI / 4.0;
            let (s0, c0) = th.sin_cos();
            let lin = normalize(&pt(s0, c0, 0.0025, 0.0025)).unwrap().r_theta;
            let n = 20_000;
            let samples: Vec<f64> = (0..n)
                .map(|_| {
                    let m = normalize(&pt(
                        s0 + noise.sample(&mut rng),
                        c0 + noise.sample(&mut rng),
                        1.0,
                        1.0,
                    ))
                    .unwrap();
                    crate::so2::wrap_angle(m.y.log() - th)
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(
                (var - lin).abs() / lin < 0.15,
                "heading {th}: {var} vs {lin}"
            );
        }
    }

    proptest! {
        #[test]
        fn normalize_is_rotation_and_polar(s in -3.0f64..3.0, c in -3.0f64..3.0, a in 0.01f64..50.0) {
            prop_assume!(s.hypot(c) > 2.0 * EPS_NORM);
            let m = normalize(&pt(s, c, 0.01, 0.02)).unwrap();
            prop_assert!(Rot2::from_matrix(*m.y.matrix()).is_ok());
            prop_assert!(crate::so2::wrap_angle(m.y.log() - s.atan2(c)).abs() < 1e-12);
            prop_assert!(m.r_theta > 0.0);
            let scaled = normalize(&pt(a * s, a * c, 0.01, 0.02)).unwrap();
            prop_assert!((scaled.y.matrix() - m.y.matrix()).abs().max() < 1e-12);
        }

        #[test]
        fn radial_perturbation_leaves_heading(th in -3.1f64..3.1, r in 0.2f64..3.0, dr in -0.1f64..0.1) {
            let (s, c) = th.sin_cos();
            let a = normalize(&pt(r * s, r * c, 0.01, 0.01)).unwrap();
            let b = normalize(&pt((r + dr) * s, (r + dr) * c, 0.01, 0.01)).unwrap();
            prop_assert!((a.y.inverse() * b.y).log().abs() < 1e-12);
        }
    }

    fn feature(i: usize, cluster: f64) -> UwbFeature {
        let j = (i % 7) as f64 * 0.01;
        UwbFeature::new(
            vec![
                1.0 + cluster + j,
                2.0 - cluster,
                1.5 + j,
                2.5,
                3.0 + cluster,
            ],
            vec![
                -80.0 + 5.0 * cluster,
                -82.0,
                -85.0 - 5.0 * cluster + j,
                -79.0,
                -90.0,
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_heading_is_learned() {
        let records: Vec<_> = (0..30)
            .map(|i| (feature(i, (i % 3) as f64 * 0.3), Angle::new(FRAC_PI_2)))
            .collect();
        let (pair, _) = train_heading_gps(
            &records,
            &[0, 1, 2, 3, 4],
            &HyperparamSearchConfig::default(),
            Exec::default(),
        )
        .unwrap();
        for (f, _) in &records {
            let p = pair.predict_pseudo_trig(f).unwrap();
            assert!((p.s - 1.0).abs() < 0.05 && p.c.abs() < 0.05);
        }
    }

    #[test]
    fn two_clusters_are_separated() {
        let records: Vec<_> = (0..40)
            .map(|i| {
                let k = i % 2;
                (feature(i, k as f64), Angle::new(k as f64 * PI))
            })
            .collect();
        let (pair, _) = train_heading_gps(
            &records,
            &[0, 1, 2, 3, 4],
            &HyperparamSearchConfig::default(),
            Exec::default(),
        )
        .unwrap();
        let p0 = pair.predict_pseudo_trig(&feature(0, 0.0)).unwrap();
        let p1 = pair.predict_pseudo_trig(&feature(0, 1.0)).unwrap();
        assert!(p0.s.abs() < 0.1 && (p0.c - 1.0).abs() < 0.1, "{p0:?}");
        assert!(p1.s.abs() < 0.1 && (p1.c + 1.0).abs() < 0.1, "{p1:?}");
        // deterministic
        assert_eq!(p0, pair.predict_pseudo_trig(&feature(0, 0.0)).unwrap());

        let far = UwbFeature::new(vec![1e6; 5], vec![0.0; 5]).unwrap();
        let pf = pair.predict_pseudo_trig(&far).unwrap();
        assert!((pf.s - pair.gp_sin().y_mean()).abs() < 1e-9);
        assert!((pf.c - pair.gp_cos().y_mean()).abs() < 1e-9);
        let cf = pair.gp_cos().params();
        assert_relative_eq!(
            pf.r_c,
            cf.sigma_f.powi(2) + cf.sigma_n.powi(2),
            max_relative = 1e-9
        );

        let dir = tempfile::tempdir().unwrap();
        pair.save(dir.path()).unwrap();
        let back = HeadingGpPair::load(dir.path()).unwrap();
        let q = back.predict_pseudo_trig(&feature(3, 0.5)).unwrap();
        let r = pair.predict_pseudo_trig(&feature(3, 0.5)).unwrap();
        assert!((q.s - r.s).abs() < 1e-10 && (q.r_c - r.r_c).abs() < 1e-10);
        assert_eq!(back.anchor_ids(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn feature_validation() {
        assert!(UwbFeature::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(UwbFeature::new(vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(UwbFeature::new(vec![1.0], vec![f64::NAN]).is_err());
    }
}

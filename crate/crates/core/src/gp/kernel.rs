use nalgebra::{DMatrix, DVectorView, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential kernel hyperparameters plus observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeKernelParams {
    /// Signal standard deviation.
    pub sigma_f: f64,
    /// Characteristic lengthscale.
    pub sigma_l: f64,
    /// Observation-noise standard deviation.
    pub sigma_n: f64,
}

impl SeKernelParams {
    pub fn new(sigma_f: f64, sigma_l: f64, sigma_n: f64) -> Result<Self> {
        let p = SeKernelParams {
            sigma_f,
            sigma_l,
            sigma_n,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_f", self.sigma_f),
            ("sigma_l", self.sigma_l),
            ("sigma_n", self.sigma_n),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn from_log(ln: [f64; 3]) -> Self {
        SeKernelParams {
            sigma_f: ln[0].exp(),
            sigma_l: ln[1].exp(),
            sigma_n: ln[2].exp(),
        }
    }

    pub fn to_log(self) -> [f64; 3] {
        [self.sigma_f.ln(), self.sigma_l.ln(), self.sigma_n.ln()]
    }

    /// Kernel value as a function of squared distance.
    #[inline]
    pub(crate) fn cov_at_sq_dist(&self, d2: f64) -> f64 {
        self.sigma_f * self.sigma_f * (-0.5 * d2 / (self.sigma_l * self.sigma_l)).exp()
    }
}

/// `σ_f² exp(−‖x − x′‖² / (2σ_ℓ²))`.
pub fn kernel_eval(x: &[f64], x_prime: &[f64], params: &SeKernelParams) -> Result<f64> {
    if x.len() != x_prime.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x_prime.len(),
        });
    }
    if x.iter().chain(x_prime).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    let d2: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(params.cov_at_sq_dist(d2))
}

#[inline]
pub(crate) fn sq_dist(a: DVectorView<'_, f64>, b: &RowDVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Cross-covariance between the rows of `a` (m×d) and the rows of `b` (p×d).
pub fn gram_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &SeKernelParams,
) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let d2: f64 = a
            .row(i)
            .iter()
            .zip(b.row(j).iter())
            .map(|(u, v)| (u - v) * (u - v))
            .sum();
        params.cov_at_sq_dist(d2)
    }))
}

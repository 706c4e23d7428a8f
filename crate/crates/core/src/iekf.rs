//! Left-invariant EKF on SO(2) driven by a gyroscope.
//!
//! With the error `δC = Cᵀ Č`, the linearized error dynamics are
//! `δξ̇ = −δw` so the discrete transition is `A = 1`, `Q = q_c·dt`, and the
//! heading measurement model linearizes to `C = 1`, `M = −1`.

use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::heading::HeadingMeasurement;
use crate::so2::Rot2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub x: Rot2,
    /// Heading error variance, rad².
    pub p: f64,
}

impl FilterState {
    pub fn new(x: Rot2, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance must be positive, got {p}"
            )));
        }
        Ok(FilterState { x, p })
    }

    pub fn heading(&self) -> f64 {
        self.x.log()
    }

    pub fn sigma(&self) -> f64 {
        self.p.sqrt()
    }
}

/// Measured angular rate (rad/s) held over `dt` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroSample {
    pub u: f64,
    pub dt: f64,
}

impl GyroSample {
    pub fn new(u: f64, dt: f64) -> Result<Self> {
        if !u.is_finite() {
            return Err(Error::NonFinite("gyro rate"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(GyroSample { u, dt })
    }
}

/// Gyro noise power spectral density, rad²/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub q_c: f64,
}

impl ProcessNoise {
    pub fn new(q_c: f64) -> Result<Self> {
        if !(q_c.is_finite() && q_c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "q_c must be positive, got {q_c}"
            )));
        }
        Ok(ProcessNoise { q_c })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationStats {
    /// `log(Yᵀ Č)ᵛ`, rad.
    pub z: f64,
    /// Innovation variance.
    pub s: f64,
    /// Squared Mahalanobis distance `z²/S`.
    pub mahalanobis: f64,
}

/// `Č = Ĉ exp(u·dt)`, `P̌ = P̂ + q_c·dt`.
pub fn predict(state: &FilterState, g: &GyroSample, noise: &ProcessNoise) -> FilterState {
    FilterState {
        x: (state.x * Rot2::exp(g.u * g.dt)).renormalized_if_drifted(),
        p: state.p + noise.q_c * g.dt,
    }
}

/// Scalar left-invariant correction with a Joseph-form covariance update.
pub fn correct(
    state: &FilterState,
    meas: &HeadingMeasurement,
) -> Result<(FilterState, InnovationStats)> {
    if !(meas.r_theta.is_finite() && meas.r_theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "measurement variance must be positive, got {}",
            meas.r_theta
        )));
    }
    let z = (meas.y.inverse() * state.x).log();
    // C = 1, M = −1
    let s = state.p + meas.r_theta;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::NonFinite("innovation variance"));
    }
    let k = state.p / s;
    let x = (state.x * Rot2::exp(-k * z)).renormalized_if_drifted();
    let p = (1.0 - k).powi(2) * state.p + k * k * meas.r_theta;
    let stats = InnovationStats {
        z,
        s,
        mahalanobis: z * z / s,
    };
    Ok((FilterState { x, p }, stats))
}

/// Like [`correct`], but skips the update when `z²/S` exceeds `bound`.
/// Returns `None` for the state when the measurement was rejected.
pub fn correct_gated(
    state: &FilterState,
    meas: &HeadingMeasurement,
    bound: f64,
) -> Result<(Option<FilterState>, InnovationStats)> {
    let (next, stats) = correct(state, meas)?;
    Ok(((stats.mahalanobis <= bound).then_some(next), stats))
}

/// Prediction-only propagation. The returned trajectory starts with `initial`.
pub fn dead_reckon(
    initial: &FilterState,
    gyro: &[GyroSample],
    noise: &ProcessNoise,
) -> Result<Vec<FilterState>> {
    if gyro.is_empty() {
        return Err(Error::InvalidArgument(
            "dead reckoning needs at least one gyro sample".into(),
        ));
    }
    let mut out = Vec::with_capacity(gyro.len() + 1);
    out.push(*initial);
    let mut state = *initial;
    for g in gyro {
        state = predict(&state, g, noise);
        out.push(state);
    }
    Ok(out)
}

fn chi2_1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf((x / 2.0).sqrt())
    }
}

/// Chi-square quantile at `confidence` for one degree of freedom.
pub fn mahalanobis_bound(confidence: f64, dof: usize) -> Result<f64> {
    if dof != 1 {
        return Err(Error::InvalidArgument(format!(
            "unsupported degrees of freedom: {dof}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must be in (0, 1), got {confidence}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while chi2_1_cdf(hi) < confidence {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_1_cdf(mid) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

use rand::Rng;
use rand_distr::StandardNormal;

use super::{relative_bearing, Anchor, AntennaPattern, PathLoss, SensorNoiseConfig, TruePose};
use crate::so2::wrap_angle;

/// Smallest reported range, m.
pub const MIN_RANGE: f64 = 0.01;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Rounds to the nearest multiple of `quantum`.
pub fn quantize(x: f64, quantum: f64) -> f64 {
    (x / quantum).round() * quantum
}

/// Euclidean distance plus Gaussian noise, floored at [`MIN_RANGE`].
/// Always draws one normal variate.
pub fn measure_range<R: Rng + ?Sized>(
    pose: &TruePose,
    anchor: &Anchor,
    cfg: &SensorNoiseConfig,
    rng: &mut R,
) -> f64 {
    let d = (anchor.position[0] - pose.position[0]).hypot(anchor.position[1] - pose.position[1]);
    (d + cfg.range_std * normal(rng)).max(MIN_RANGE)
}

/// Path loss plus antenna gain at the body-frame bearing to the anchor,
/// plus noise, quantized. Always draws one normal variate.
pub fn measure_rss<R: Rng + ?Sized>(
    pose: &TruePose,
    anchor: &Anchor,
    pattern: &AntennaPattern,
    path_loss: &PathLoss,
    cfg: &SensorNoiseConfig,
    rng: &mut R,
) -> f64 {
    let d = (anchor.position[0] - pose.position[0])
        .hypot(anchor.position[1] - pose.position[1])
        .max(MIN_RANGE);
    let phi = relative_bearing(pose.position, pose.heading, anchor.position);
    let raw = path_loss.at(d) + pattern.gain(phi) + cfg.rss_std * normal(rng);
    quantize(raw, cfg.rss_quantum)
}

/// True rate plus white noise of variance `gyro_psd / dt`.
pub fn measure_gyro<R: Rng + ?Sized>(
    pose: &TruePose,
    cfg: &SensorNoiseConfig,
    dt: f64,
    rng: &mut R,
) -> f64 {
    pose.rate + (cfg.gyro_psd / dt).sqrt() * normal(rng)
}

/// Wrapped heading with Gaussian noise and an optional regional bias.
pub fn measure_mag<R: Rng + ?Sized>(pose: &TruePose, cfg: &SensorNoiseConfig, rng: &mut R) -> f64 {
    let mut h = pose.heading + cfg.mag_std * normal(rng);
    if let Some(dist) = &cfg.mag_disturbance {
        let r = (pose.position[0] - dist.center[0]).hypot(pose.position[1] - dist.center[1]);
        if r <= dist.radius {
            h += dist.offset;
        }
    }
    wrap_angle(h)
}

//! Synthetic UWB world: anchors, an orientation-dependent antenna pattern,
//! planar trajectories and noisy sensor readings with ground truth.

mod dataset;
mod sensors;
mod trajectory;

pub use dataset::{build_dataset, simulate, Dataset, DatasetMeta, SampleRecord};
pub use sensors::{measure_gyro, measure_mag, measure_range, measure_rss, quantize, MIN_RANGE};
pub use trajectory::{generate_trajectory, Area, Profile, TruePose};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so2::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u32,
    /// Position in the local frame, m.
    pub position: [f64; 2],
}

/// The five-anchor layout used by default, surrounding a 4 m × 2 m area.
pub fn default_anchors() -> Vec<Anchor> {
    [
        [-0.5, -0.5],
        [4.5, -0.5],
        [4.5, 2.5],
        [-0.5, 2.5],
        [2.0, 3.0],
    ]
    .into_iter()
    .enumerate()
    .map(|(i, position)| Anchor {
        id: i as u32,
        position,
    })
    .collect()
}

/// Checks id uniqueness and finiteness, and returns the anchors sorted by id.
pub fn validate_anchors(anchors: &[Anchor]) -> Result<Vec<Anchor>> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one anchor is required".into(),
        ));
    }
    let mut sorted = anchors.to_vec();
    sorted.sort_by_key(|a| a.id);
    if sorted.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidArgument("anchor ids must be unique".into()));
    }
    if sorted
        .iter()
        .any(|a| a.position.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("anchor position"));
    }
    Ok(sorted)
}

/// Tag antenna gain (dBi) as a function of bearing in the body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AntennaPattern {
    /// `g₀ + a·cos(2(φ − φ₀)) + b·cos(φ − φ₁)`.
    Lobed {
        g0: f64,
        a: f64,
        phi0: f64,
        b: f64,
        phi1: f64,
    },
    /// Periodic piecewise-linear table of `(bearing rad, gain dBi)` pairs.
    Table { points: Vec<(f64, f64)> },
}

impl Default for AntennaPattern {
    /// Two lobes plus a single-lobe asymmetry; peak-to-trough ≈ 10.1 dBi.
    /// The `b` term breaks the front/back symmetry of the two-lobe term,
    /// which would otherwise make θ and θ + π indistinguishable.
    fn default() -> Self {
        AntennaPattern::Lobed {
            g0: 0.0,
            a: 4.0,
            phi0: 0.0,
            b: 2.0,
            phi1: 0.0,
        }
    }
}

impl AntennaPattern {
    pub fn isotropic() -> Self {
        AntennaPattern::Lobed {
            g0: 0.0,
            a: 0.0,
            phi0: 0.0,
            b: 0.0,
            phi1: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AntennaPattern::Lobed {
                g0,
                a,
                phi0,
                b,
                phi1,
            } => {
                if [g0, a, phi0, b, phi1].iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("antenna pattern parameter"));
                }
            }
            AntennaPattern::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidArgument(
                        "gain table needs at least 2 points".into(),
                    ));
                }
                if points.iter().any(|(p, g)| !p.is_finite() || !g.is_finite()) {
                    return Err(Error::NonFinite("gain table"));
                }
            }
        }
        Ok(())
    }

    pub fn gain(&self, phi: f64) -> f64 {
        match self {
            AntennaPattern::Lobed {
                g0,
                a,
                phi0,
                b,
                phi1,
            } => g0 + a * (2.0 * (phi - phi0)).cos() + b * (phi - phi1).cos(),
            AntennaPattern::Table { points } => table_gain(points, phi),
        }
    }

    /// Peak-to-trough spread sampled on a fine bearing grid.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = (0..3600)
            .map(|i| self.gain(i as f64 * std::f64::consts::TAU / 3600.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
                (lo.min(g), hi.max(g))
            });
        hi - lo
    }
}

fn table_gain(points: &[(f64, f64)], phi: f64) -> f64 {
    use std::f64::consts::TAU;
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(p, g)| (p.rem_euclid(TAU), g))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x = phi.rem_euclid(TAU);
    let n = pts.len();
    let upper = pts.iter().position(|p| p.0 > x).unwrap_or(n);
    let (p0, p1) = if upper == 0 {
        let last = pts[n - 1];
        ((last.0 - TAU, last.1), pts[0])
    } else if upper == n {
        (pts[n - 1], (pts[0].0 + TAU, pts[0].1))
    } else {
        (pts[upper - 1], pts[upper])
    };
    let span = p1.0 - p0.0;
    if span <= 0.0 {
        return p0.1;
    }
    p0.1 + (p1.1 - p0.1) * (x - p0.0) / span
}

/// Log-distance path loss: `P₀ − 10γ·log₁₀(d/d₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub p0: f64,
    pub d0: f64,
    pub gamma: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        PathLoss {
            p0: -75.0,
            d0: 1.0,
            gamma: 1.8,
        }
    }
}

impl PathLoss {
    pub fn at(&self, d: f64) -> f64 {
        self.p0 - 10.0 * self.gamma * (d / self.d0).log10()
    }
}

/// A circular region that biases magnetometer headings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagDisturbance {
    pub center: [f64; 2],
    pub radius: f64,
    /// Heading bias inside the region, rad.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoiseConfig {
    /// m
    pub range_std: f64,
    /// dBi
    pub rss_std: f64,
    /// rad²/s
    pub gyro_psd: f64,
    /// rad
    pub mag_std: f64,
    /// dBi
    pub rss_quantum: f64,
    pub seed: u64,
    pub mag_disturbance: Option<MagDisturbance>,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        SensorNoiseConfig {
            range_std: 0.10,
            rss_std: 0.5,
            gyro_psd: 1e-5,
            mag_std: 0.05,
            rss_quantum: 1.0,
            seed: 0,
            mag_disturbance: None,
        }
    }
}

impl SensorNoiseConfig {
    pub fn noiseless(seed: u64) -> Self {
        SensorNoiseConfig {
            range_std: 0.0,
            rss_std: 0.0,
            gyro_psd: 0.0,
            mag_std: 0.0,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("range_std", self.range_std),
            ("rss_std", self.rss_std),
            ("gyro_psd", self.gyro_psd),
            ("mag_std", self.mag_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.rss_quantum.is_finite() && self.rss_quantum > 0.0) {
            return Err(Error::InvalidArgument(
                "rss_quantum must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Static part of the simulated environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct World {
    pub area: Area,
    pub anchors: Vec<Anchor>,
    pub pattern: AntennaPattern,
    pub path_loss: PathLoss,
}

impl Default for World {
    fn default() -> Self {
        World {
            area: Area::default(),
            anchors: default_anchors(),
            pattern: AntennaPattern::default(),
            path_loss: PathLoss::default(),
        }
    }
}

/// Bearing from `from` to `to` resolved in a body frame with heading `heading`.
pub fn relative_bearing(from: [f64; 2], heading: f64, to: [f64; 2]) -> f64 {
    wrap_angle((to[1] - from[1]).atan2(to[0] - from[0]) - heading)
}

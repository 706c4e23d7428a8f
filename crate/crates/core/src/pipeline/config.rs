use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::HyperparamSearchConfig;
use crate::sim::{Profile, SensorNoiseConfig, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "gp-iekf")]
    GpIekf,
    #[serde(rename = "mag-iekf")]
    MagIekf,
    #[serde(rename = "deadreckon")]
    DeadReckon,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::GpIekf, Estimator::MagIekf, Estimator::DeadReckon];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::GpIekf => "gp-iekf",
            Estimator::MagIekf => "mag-iekf",
            Estimator::DeadReckon => "deadreckon",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub train_duration: f64,
    pub test_duration: f64,
    pub rate_hz: f64,
    pub train_profile: Profile,
    pub test_profile: Profile,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            train_duration: 600.0,
            test_duration: 300.0,
            rate_hz: 10.0,
            train_profile: Profile::SmoothRandom,
            test_profile: Profile::SmoothRandom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub estimators: Vec<Estimator>,
    pub monte_carlo_runs: usize,
    /// Initial heading error variance, rad². Also the initial covariance.
    pub init_error_var: f64,
    /// Filter gyro PSD, rad²/s. Defaults to the dataset's simulated value.
    pub q_c: Option<f64>,
    /// Magnetometer heading variance, rad². Defaults to the dataset's value.
    pub mag_var: Option<f64>,
    /// Reject corrections whose Mahalanobis distance exceeds the bound.
    pub gating: bool,
    pub gate_confidence: f64,
    /// Trailing share of the trajectory averaged for the steady ±3σ figure.
    pub steady_fraction: f64,
    /// Leading share of the trajectory excluded from consistency fractions.
    pub transient_fraction: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            estimators: vec![Estimator::GpIekf],
            monte_carlo_runs: 100,
            init_error_var: 1.0,
            q_c: None,
            mag_var: None,
            gating: false,
            gate_confidence: 0.997,
            steady_fraction: 0.5,
            transient_fraction: 0.1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.monte_carlo_runs == 0 {
            return Err(Error::InvalidArgument(
                "monte_carlo_runs must be ≥ 1".into(),
            ));
        }
        if !(self.init_error_var.is_finite() && self.init_error_var > 0.0) {
            return Err(Error::InvalidArgument(
                "init_error_var must be positive".into(),
            ));
        }
        for (name, v) in [("q_c", self.q_c), ("mag_var", self.mag_var)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidArgument(format!("{name} must be positive")));
                }
            }
        }
        for (name, v) in [
            ("steady_fraction", self.steady_fraction),
            ("transient_fraction", self.transient_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.steady_fraction == 0.0 {
            return Err(Error::InvalidArgument(
                "steady_fraction must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Top-level configuration file (TOML). Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub world: World,
    /// The `seed` field here is ignored; noise streams derive from `seed`.
    pub noise: SensorNoiseConfig,
    pub generate: GenerateConfig,
    pub search: HyperparamSearchConfig,
    pub run: RunConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

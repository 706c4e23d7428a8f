//! Heading estimation for planar robots from ultra-wideband range and
//! received-signal-strength measurements.
//!
//! Two independent Gaussian processes regress the sine and cosine of heading
//! from a 10-dimensional range/RSS feature. Their normalized output is an
//! SO(2) measurement with a linearized variance, fused with gyroscope rates in
//! a left-invariant EKF.

pub mod error;
pub mod exec;
pub mod gp;
pub mod so2;

pub use error::{Error, Result};
pub use exec::Exec;
pub mod heading;
pub mod iekf;
pub mod pipeline;
pub mod sim;

//! Exact scalar Gaussian-process regression with a squared-exponential kernel.

mod kernel;
mod model;
mod search;

pub use kernel::{gram_matrix, kernel_eval, SeKernelParams};
pub use model::{log_marginal_likelihood, GpModel, GpModelFile, Standardizer, TrainingSet};
pub use search::{fit, fit_with, FitSummary, HyperparamSearchConfig};

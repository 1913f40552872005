//! Stationary Gaussian-process machinery: points, kernels, factorization,
//! marginal likelihood and posterior prediction.

pub mod factor;
pub mod kernel;
pub mod point;
pub mod regression;

pub use factor::Factor;
pub use kernel::{
    ch_cov, cov_matrix, cov_matrix_sym, se_cov, BaseKernelSpec, CovFn, GlobalHypers, KernelFamily,
    StationaryKernel,
};
pub use point::{ObservationSet, SpatioTemporalPoint};
pub use regression::{log_marginal_likelihood, posterior, Posterior, Prediction};

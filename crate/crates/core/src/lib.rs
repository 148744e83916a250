//! Exact Gaussian processes with sparsity-discovering kernels.
//!
//! The covariance is the product of a core kernel (stationary Matérn,
//! location-dependent Matérn or constant) and a compactly supported kernel
//! built from a Wendland polynomial plus sums of bump functions. Assembled
//! covariance matrices are stored sparsely; log-determinants come from
//! stochastic Lanczos quadrature and quadratic forms from MINRES, with a
//! dense Cholesky path for small problems. Hyperparameters are inferred by
//! adaptive block Metropolis-Hastings with Bernoulli amplitudes and
//! Beta-Bernoulli inclusion probabilities.

pub mod bayes;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod synthetic;

pub use error::{Error, Result};

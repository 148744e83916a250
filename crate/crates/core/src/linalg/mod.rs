//! Sparse covariance assembly and the solvers behind the likelihood:
//! stochastic Lanczos log-determinants, MINRES solves and a dense Cholesky
//! path for small problems.

mod assembly;
mod csr;
mod dense;
mod lanczos;
mod minres;
mod mmio;

pub use assembly::{assemble_covariance, condition_guard, sparsity_fraction, AssemblyPlan};
pub(crate) use assembly::worker_pool;
pub use csr::SparseSymmetricMatrix;
pub use dense::{
    cholesky_with_jitter, dense_logdet_solve, dense_logdet_solve_limited, DEFAULT_DENSE_THRESHOLD,
};
pub(crate) use dense::{cholesky, cholesky_logdet};
pub use lanczos::{lanczos_logdet, DEFAULT_PROBES, DEFAULT_STEPS};
pub use minres::{minres_solve, SolverReport, DEFAULT_TOLERANCE};
pub use mmio::{read_matrix_market, write_matrix_market, write_matrix_market_annotated};

/// Solver settings shared by the likelihood and prediction paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub dense_threshold: usize,
    pub probes: usize,
    pub steps: usize,
    pub tolerance: f64,
    /// Iteration cap as a multiple of `N`.
    pub max_iters_factor: usize,
    pub plan: AssemblyPlan,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            probes: DEFAULT_PROBES,
            steps: DEFAULT_STEPS,
            tolerance: DEFAULT_TOLERANCE,
            max_iters_factor: 10,
            plan: AssemblyPlan::default(),
            seed: 0,
        }
    }
}

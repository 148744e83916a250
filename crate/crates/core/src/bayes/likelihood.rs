use std::f64::consts::PI;

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::kernels::{KernelHyperparameters, NoiseParams};
use crate::linalg::{
    assemble_covariance, cholesky, cholesky_logdet, condition_guard, lanczos_logdet, minres_solve,
    SolverSettings, SparseSymmetricMatrix,
};
use crate::{Error, Result};

/// How the log-determinant and the solve are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMethod {
    /// Dense Cholesky.
    Dense,
    /// Stochastic Lanczos quadrature and MINRES.
    Iterative,
    /// Dense up to the settings' threshold, iterative beyond it.
    #[default]
    Auto,
}

enum Solver {
    Dense(Cholesky<f64, Dyn>),
    Iterative(SparseSymmetricMatrix, SolverSettings),
}

/// A factorized `C_z` for one `theta`, reusable across `beta` values.
pub struct Factorization {
    n: usize,
    logdet: f64,
    solver: Solver,
}

impl Factorization {
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// `C_z^{-1} r`.
    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        match &self.solver {
            Solver::Dense(chol) => Ok(chol.solve(&DVector::from_column_slice(r)).as_slice().to_vec()),
            Solver::Iterative(a, s) => {
                let max_iters = s.max_iters_factor.saturating_mul(self.n).max(1);
                let (x, report) = minres_solve(a, r, s.tolerance, max_iters)?;
                if !report.converged {
                    return Err(Error::NoConvergence {
                        iterations: report.iterations,
                        residual: report.final_residual_norm,
                    });
                }
                Ok(x)
            }
        }
    }

    /// Log density of the residual `r = z - W beta` under `N(0, C_z)`.
    pub fn log_density(&self, r: &[f64]) -> Result<f64> {
        let x = self.solve(r)?;
        let quad: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
        let ll = -0.5 * self.n as f64 * (2.0 * PI).ln() - 0.5 * self.logdet - 0.5 * quad;
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(Error::NotPositiveDefinite(format!("log-likelihood evaluated to {ll}")))
        }
    }
}

/// `theta` with the dataset's known per-point noise substituted in.
pub(crate) fn with_data_noise(data: &Dataset, theta: &KernelHyperparameters) -> KernelHyperparameters {
    let mut t = theta.clone();
    if let Some(tau2) = &data.noise {
        t.noise = NoiseParams::Heteroskedastic {
            tau2_per_point: tau2.clone(),
        };
    }
    t
}

/// Assembles and factorizes `C_z` for `theta` at the data inputs.
pub fn factorize(
    data: &Dataset,
    theta: &KernelHyperparameters,
    method: LikelihoodMethod,
    settings: &SolverSettings,
) -> Result<Factorization> {
    theta.validate(data.dim())?;
    let theta = with_data_noise(data, theta);
    let n = data.len();
    let mut cz = assemble_covariance(&data.inputs, &theta, &settings.plan, true)?;
    if let Some((added, guarded)) = condition_guard(&cz) {
        log::debug!("conditioning guard added {added:e} to the diagonal");
        cz = guarded;
    }
    let dense = match method {
        LikelihoodMethod::Dense => true,
        LikelihoodMethod::Iterative => false,
        LikelihoodMethod::Auto => n <= settings.dense_threshold,
    };
    if dense {
        let chol = cholesky(cz.to_dense())?;
        Ok(Factorization {
            n,
            logdet: cholesky_logdet(&chol),
            solver: Solver::Dense(chol),
        })
    } else {
        let logdet = lanczos_logdet(&cz, settings.probes, settings.steps, settings.seed)?;
        Ok(Factorization {
            n,
            logdet,
            solver: Solver::Iterative(cz, *settings),
        })
    }
}

/// `log N(z; W beta, C_z(theta))`.
pub fn log_marginal_likelihood(
    data: &Dataset,
    beta: &[f64],
    theta: &KernelHyperparameters,
    method: LikelihoodMethod,
    settings: &SolverSettings,
) -> Result<f64> {
    if beta.len() != data.design_cols() {
        return Err(Error::DimensionMismatch {
            expected: data.design_cols(),
            found: beta.len(),
        });
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    factorize(data, theta, method, settings)?.log_density(&data.residual(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoreKernelParams, Inputs, Smoothness};

    fn matern(tau2: f64) -> KernelHyperparameters {
        KernelHyperparameters {
            core: CoreKernelParams::StationaryMatern {
                variance: 1.0,
                length_scale: 0.5,
                nu: Smoothness::FiveHalves,
            },
            sparse: None,
            noise: NoiseParams::Homoskedastic { tau2 },
        }
    }

    #[test]
    fn single_point_unit_variance() {
        let data = Dataset::with_zero_mean(Inputs::from_1d(&[0.3]), vec![0.0]).unwrap();
        let mut theta = matern(0.0);
        theta.core = CoreKernelParams::Constant;
        let ll = log_marginal_likelihood(&data, &[], &theta, LikelihoodMethod::Dense, &SolverSettings::default())
            .unwrap();
        assert!((ll + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn two_independent_points() {
        // Far apart relative to the length-scale, with zero core variance
        // replaced by noise: C_z = I.
        let data = Dataset::with_zero_mean(Inputs::from_1d(&[0.0, 1.0]), vec![0.0, 0.0]).unwrap();
        let mut theta = matern(1.0);
        theta.core = CoreKernelParams::StationaryMatern {
            variance: 1e-300,
            length_scale: 1e-3,
            nu: Smoothness::Half,
        };
        let ll = log_marginal_likelihood(&data, &[], &theta, LikelihoodMethod::Dense, &SolverSettings::default())
            .unwrap();
        assert!((ll + 1.837877).abs() < 1e-6);
    }

    #[test]
    fn dense_and_iterative_agree() {
        let xs: Vec<f64> = (0..500).map(|i| (i as f64 * 0.618034).fract() * 5.0).collect();
        let z: Vec<f64> = xs.iter().map(|x| 3.0 * x.sin()).collect();
        let data = Dataset::with_constant_mean(Inputs::from_1d(&xs), z).unwrap();
        let s = SolverSettings::default();
        let mut theta = matern(0.5);
        theta.sparse = Some(crate::kernels::SparseKernelParams::wendland_only(1.0, 0.8));
        let fd = factorize(&data, &theta, LikelihoodMethod::Dense, &s).unwrap();
        let fi = factorize(&data, &theta, LikelihoodMethod::Iterative, &s).unwrap();
        assert!(((fd.logdet() - fi.logdet()) / fd.logdet()).abs() < 0.01, "{} {}", fd.logdet(), fi.logdet());
        let d = log_marginal_likelihood(&data, &[0.1], &theta, LikelihoodMethod::Dense, &s).unwrap();
        let i = log_marginal_likelihood(&data, &[0.1], &theta, LikelihoodMethod::Iterative, &s).unwrap();
        assert!(((d - i) / d).abs() < 0.01, "dense {d} iterative {i}");
    }

    #[test]
    fn beta_length_checked() {
        let data = Dataset::with_constant_mean(Inputs::from_1d(&[0.0]), vec![0.0]).unwrap();
        let r = log_marginal_likelihood(&data, &[], &matern(0.1), LikelihoodMethod::Dense, &SolverSettings::default());
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}

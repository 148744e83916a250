use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::data::Dataset;
use super::likelihood::with_data_noise;
use super::mcmc::Draw;
use crate::kernels::{Inputs, KernelHyperparameters};
use crate::linalg::{
    assemble_covariance, cholesky, cholesky_with_jitter, condition_guard, minres_solve, worker_pool,
    SolverSettings, SparseSymmetricMatrix,
};
use crate::{Error, Result};

/// Predictive moments under one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Posterior predictive summary at the query inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Moments under each posterior draw that was used, in draw order.
    pub per_draw: Vec<DrawMoments>,
    /// Conditional simulations of `y`, one vector per simulation.
    pub draws: Vec<Vec<f64>>,
}

fn design_mean(design: &DMatrix<f64>, beta: &[f64]) -> Result<Vec<f64>> {
    if design.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: design.ncols(),
            found: beta.len(),
        });
    }
    Ok((design * DVector::from_column_slice(beta)).as_slice().to_vec())
}

/// Dense `C_y` between two input sets.
pub fn cross_covariance(theta: &KernelHyperparameters, a: &Inputs, b: &Inputs) -> DMatrix<f64> {
    let ca = theta.prepare(a);
    let cb = theta.prepare(b);
    DMatrix::from_fn(a.len(), b.len(), |i, j| theta.y_cached(a, &ca, i, b, &cb, j))
}

fn prior_covariance(theta: &KernelHyperparameters, q: &Inputs) -> DMatrix<f64> {
    let c = theta.prepare(q);
    let mut m = DMatrix::zeros(q.len(), q.len());
    for i in 0..q.len() {
        for j in 0..=i {
            let v = theta.y_cached(q, &c, i, q, &c, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

enum CzSolver {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Iterative(SparseSymmetricMatrix),
}

impl CzSolver {
    fn solve_vec(&self, r: &[f64], settings: &SolverSettings) -> Result<Vec<f64>> {
        match self {
            CzSolver::Dense(c) => Ok(c.solve(&DVector::from_column_slice(r)).as_slice().to_vec()),
            CzSolver::Iterative(a) => {
                let max_iters = settings.max_iters_factor.saturating_mul(a.dim()).max(1);
                let (x, rep) = minres_solve(a, r, settings.tolerance, max_iters)?;
                if rep.converged {
                    Ok(x)
                } else {
                    Err(Error::NoConvergence {
                        iterations: rep.iterations,
                        residual: rep.final_residual_norm,
                    })
                }
            }
        }
    }

    /// `C_z^{-1} B` column by column.
    fn solve_mat(&self, b: &DMatrix<f64>, settings: &SolverSettings) -> Result<DMatrix<f64>> {
        match self {
            CzSolver::Dense(c) => Ok(c.solve(b)),
            CzSolver::Iterative(_) => {
                let mut out = DMatrix::zeros(b.nrows(), b.ncols());
                for j in 0..b.ncols() {
                    let x = self.solve_vec(b.column(j).as_slice(), settings)?;
                    out.set_column(j, &DVector::from_vec(x));
                }
                Ok(out)
            }
        }
    }
}

/// Moments (and optionally the full covariance) of `y | z` for one draw.
fn conditional_one(
    draw: &Draw,
    data: &Dataset,
    query: &Inputs,
    query_design: &DMatrix<f64>,
    full_cov: bool,
    settings: &SolverSettings,
) -> Result<(DrawMoments, Option<DMatrix<f64>>)> {
    let theta = with_data_noise(data, &draw.theta);
    let prior_mean = design_mean(query_design, &draw.beta)?;
    let m = query.len();
    let prior_diag = |q: &Inputs| {
        let c = theta.prepare(q);
        (0..m).map(|i| theta.y_cached(q, &c, i, q, &c, i)).collect::<Vec<_>>()
    };
    if data.is_empty() {
        let cov = full_cov.then(|| prior_covariance(&theta, query));
        return Ok((
            DrawMoments {
                mean: prior_mean,
                var: prior_diag(query),
            },
            cov,
        ));
    }
    let mut cz = assemble_covariance(&data.inputs, &theta, &settings.plan, true)?;
    if let Some((_, guarded)) = condition_guard(&cz) {
        cz = guarded;
    }
    let solver = if data.len() <= settings.dense_threshold {
        CzSolver::Dense(cholesky(cz.to_dense())?)
    } else {
        CzSolver::Iterative(cz)
    };
    let resid = data.residual(&draw.beta);
    let alpha = solver.solve_vec(&resid, settings)?;
    let czy = cross_covariance(&theta, &data.inputs, query);
    let mean: Vec<f64> = prior_mean
        .iter()
        .enumerate()
        .map(|(j, p)| p + czy.column(j).dot(&DVector::from_column_slice(&alpha)))
        .collect();
    let w = solver.solve_mat(&czy, settings)?;
    let diag = prior_diag(query);
    let var: Vec<f64> = (0..m)
        .map(|j| (diag[j] - czy.column(j).dot(&w.column(j))).max(0.0))
        .collect();
    let cov = full_cov.then(|| {
        let mut c = prior_covariance(&theta, query) - czy.transpose() * &w;
        c = (&c + c.transpose()) * 0.5;
        c
    });
    Ok((DrawMoments { mean, var }, cov))
}

/// Posterior predictive mean and standard deviation at `query`, mixing the
/// closed-form conditional moments over the given posterior draws.
///
/// With `draws_per_sample > 0`, that many conditional simulations are also
/// generated per posterior draw from a stream seeded by `(seed, draw index)`.
/// A draw whose solve fails is skipped and logged.
pub fn predict_conditional(
    samples: &[Draw],
    data: &Dataset,
    query: &Inputs,
    query_design: &DMatrix<f64>,
    draws_per_sample: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<PredictionResult> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no posterior draws to predict with".into()));
    }
    if query_design.nrows() != query.len() {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            found: query_design.nrows(),
        });
    }
    if query.dim() != data.dim() && !data.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: query.dim(),
        });
    }
    let m = query.len();
    let one = |(k, d): (usize, &Draw)| -> Option<(DrawMoments, Vec<Vec<f64>>)> {
        let res = conditional_one(d, data, query, query_design, draws_per_sample > 0, settings)
            .and_then(|(mom, cov)| {
                let sims = match cov {
                    Some(c) if m > 0 => {
                        let (chol, _) = cholesky_with_jitter(&c)?;
                        let l = chol.l();
                        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                        (0..draws_per_sample)
                            .map(|_| {
                                let o = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(&mut rng)));
                                let y = &l * o;
                                mom.mean.iter().zip(y.iter()).map(|(a, b)| a + b).collect()
                            })
                            .collect()
                    }
                    _ => Vec::new(),
                };
                Ok((mom, sims))
            });
        match res {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("skipping posterior draw at iteration {}: {e}", d.iteration);
                None
            }
        }
    };
    let results: Vec<Option<(DrawMoments, Vec<Vec<f64>>)>> = if settings.plan.workers > 1 && samples.len() > 1 {
        worker_pool(settings.plan.workers).install(|| samples.par_iter().enumerate().map(one).collect())
    } else {
        samples.iter().enumerate().map(one).collect()
    };
    let mut per_draw = Vec::new();
    let mut draws = Vec::new();
    for (mom, sims) in results.into_iter().flatten() {
        per_draw.push(mom);
        draws.extend(sims);
    }
    if per_draw.is_empty() {
        return Err(Error::NotPositiveDefinite(
            "prediction failed for every posterior draw".into(),
        ));
    }
    let l = per_draw.len() as f64;
    let mut mean = vec![0.0; m];
    let mut second = vec![0.0; m];
    for mom in &per_draw {
        for j in 0..m {
            mean[j] += mom.mean[j] / l;
            second[j] += (mom.var[j] + mom.mean[j] * mom.mean[j]) / l;
        }
    }
    let sd = mean
        .iter()
        .zip(&second)
        .map(|(mu, s)| (s - mu * mu).max(0.0).sqrt())
        .collect();
    Ok(PredictionResult {
        mean,
        sd,
        per_draw,
        draws,
    })
}

/// Draws from `N(W_P beta, C_y)` at fixed query inputs, sharing one factor.
pub struct UnconditionalSampler {
    mean: Vec<f64>,
    factor: Option<DMatrix<f64>>,
}

impl UnconditionalSampler {
    pub fn new(
        beta: &[f64],
        theta: &KernelHyperparameters,
        query: &Inputs,
        query_design: &DMatrix<f64>,
    ) -> Result<Self> {
        if query_design.nrows() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: query.len(),
                found: query_design.nrows(),
            });
        }
        let mean = design_mean(query_design, beta)?;
        let cy = prior_covariance(theta, query);
        let factor = if cy.iter().all(|v| *v == 0.0) {
            None
        } else {
            Some(cholesky_with_jitter(&cy)?.0.l())
        };
        Ok(Self { mean, factor })
    }

    pub fn draw(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        match &self.factor {
            None => self.mean.clone(),
            Some(l) => {
                let m = self.mean.len();
                let o = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
                let y = l * o;
                self.mean.iter().zip(y.iter()).map(|(a, b)| a + b).collect()
            }
        }
    }
}

/// One draw `y* = W_P beta + U o` with `U U^T = C_y` at the query inputs.
pub fn predict_unconditional(
    beta: &[f64],
    theta: &KernelHyperparameters,
    query: &Inputs,
    query_design: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = UnconditionalSampler::new(beta, theta, query, query_design)?;
    Ok(sampler.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoreKernelParams, NoiseParams, Smoothness};

    fn theta(tau2: f64) -> KernelHyperparameters {
        KernelHyperparameters {
            core: CoreKernelParams::StationaryMatern {
                variance: 1.0,
                length_scale: 0.3,
                nu: Smoothness::FiveHalves,
            },
            sparse: None,
            noise: NoiseParams::Homoskedastic { tau2 },
        }
    }

    fn draw(theta: KernelHyperparameters, beta: Vec<f64>) -> Draw {
        Draw {
            iteration: 1,
            beta,
            theta,
            log_likelihood: 0.0,
            log_posterior: 0.0,
        }
    }

    #[test]
    fn noise_free_interpolates() {
        let xs = [0.1, 0.4, 0.8];
        let z = vec![1.0, -0.5, 2.0];
        let data = Dataset::with_constant_mean(Inputs::from_1d(&xs), z.clone()).unwrap();
        let q = Inputs::from_1d(&xs);
        let w = DMatrix::from_element(3, 1, 1.0);
        let p = predict_conditional(&[draw(theta(0.0), vec![0.3])], &data, &q, &w, 0, 0, &SolverSettings::default())
            .unwrap();
        for j in 0..3 {
            assert!((p.mean[j] - z[j]).abs() < 1e-8);
            assert!(p.sd[j] < 1e-4);
            assert!(p.per_draw[0].var[j] < 1e-8);
        }
    }

    #[test]
    fn empty_data_returns_prior() {
        let data = Dataset::with_constant_mean(Inputs::new(1, vec![]).unwrap(), vec![]).unwrap();
        let q = Inputs::from_1d(&[0.0, 0.5]);
        let w = DMatrix::from_element(2, 1, 1.0);
        let p = predict_conditional(&[draw(theta(0.1), vec![2.0])], &data, &q, &w, 0, 0, &SolverSettings::default())
            .unwrap();
        assert_eq!(p.mean, vec![2.0, 2.0]);
        assert!((p.sd[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let t = KernelHyperparameters {
            core: CoreKernelParams::StationaryMatern {
                variance: 0.0,
                length_scale: 1.0,
                nu: Smoothness::Half,
            },
            sparse: None,
            noise: NoiseParams::default(),
        };
        let q = Inputs::from_1d(&[0.0, 1.0]);
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert_eq!(predict_unconditional(&[1.5], &t, &q, &w, 3).unwrap(), vec![1.5, 3.0]);
    }

    #[test]
    fn unconditional_variance() {
        let t = KernelHyperparameters {
            core: CoreKernelParams::StationaryMatern {
                variance: 4.0,
                length_scale: 1.0,
                nu: Smoothness::Half,
            },
            sparse: None,
            noise: NoiseParams::default(),
        };
        let q = Inputs::from_1d(&[0.0]);
        let w = DMatrix::zeros(1, 0);
        let s = UnconditionalSampler::new(&[], &t, &q, &w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ys: Vec<f64> = (0..10_000).map(|_| s.draw(&mut rng)[0]).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        assert!((v - 4.0).abs() < 0.2, "variance {v}");
    }
}

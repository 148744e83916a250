//! Stochastic Lanczos quadrature for `log det(A)`.
//!
//! `A` is first scaled to unit diagonal, `A = D^{1/2} B D^{1/2}`, so that
//! `log det A = sum log d_i + log det B`. For each Rademacher probe `v`
//! (`|v|^2 = N`), a Lanczos run on `B` started at `v / |v|` yields a
//! tridiagonal `T_k` with Ritz values `theta_l` and first eigenvector
//! components `tau_l`; Gauss quadrature gives
//! `v^T log(B) v ~ N * sum_l tau_l^2 log(theta_l)`.
//!
//! The probe average is corrected with two control variates whose traces
//! are known exactly, `v^T B v` (trace `N`) and `v^T B^2 v` (trace
//! `|B|_F^2`). Both come from the first Lanczos step, so the correction
//! costs no extra products. Coefficients are the least-squares fit over the
//! probes.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SparseSymmetricMatrix;
use crate::{Error, Result};

/// Defaults used by the likelihood when nothing else is configured.
pub const DEFAULT_PROBES: usize = 30;
pub const DEFAULT_STEPS: usize = 50;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lanczos tridiagonalization with full reorthogonalization, started at
/// `q0` (unit norm). Returns the diagonal and off-diagonal of `T_k`.
pub(crate) fn lanczos_tridiag(
    a: &SparseSymmetricMatrix,
    q0: Vec<f64>,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    let mut q = q0;
    let mut w = vec![0.0; n];
    for k in 0..steps.min(n) {
        a.matvec_into(&q, &mut w);
        let alpha = dot(&q, &w);
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= alpha * qi;
        }
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            for (wi, pi) in w.iter_mut().zip(prev as &Vec<f64>) {
                *wi -= beta * pi;
            }
        }
        basis.push(q.clone());
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        alphas.push(alpha);
        let beta = dot(&w, &w).sqrt();
        let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if k + 1 == steps.min(n) || beta <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|x| x / beta).collect();
    }
    (alphas, betas)
}

/// Gauss quadrature of `log` against the spectral measure of `T`.
fn quadrature_log(alphas: &[f64], betas: &[f64]) -> Result<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut acc = 0.0;
    for l in 0..k {
        let theta = eig.eigenvalues[l];
        if !(theta > 0.0) {
            return Err(Error::IndefiniteRitz(theta));
        }
        let tau = eig.eigenvectors[(0, l)];
        acc += tau * tau * theta.ln();
    }
    Ok(acc)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Control-variate coefficients from the probe sample; zero when the
/// controls are degenerate or there are too few probes to fit them.
fn control_coefficients(ys: &[f64], x1: &[f64], x2: &[f64]) -> (f64, f64) {
    if ys.len() < 4 {
        return (0.0, 0.0);
    }
    let (s11, s22, s12) = (covariance(x1, x1), covariance(x2, x2), covariance(x1, x2));
    let (s1y, s2y) = (covariance(x1, ys), covariance(x2, ys));
    let det = s11 * s22 - s12 * s12;
    if det > 1e-12 * s11 * s22 && det.is_finite() {
        ((s22 * s1y - s12 * s2y) / det, (s11 * s2y - s12 * s1y) / det)
    } else if s11 > 0.0 {
        (s1y / s11, 0.0)
    } else {
        (0.0, 0.0)
    }
}

/// Stochastic Lanczos quadrature estimate of `log det(A)`.
pub fn lanczos_logdet(a: &SparseSymmetricMatrix, probes: usize, steps: usize, seed: u64) -> Result<f64> {
    if probes == 0 || steps == 0 {
        return Err(Error::InvalidParameter("probes and steps must be positive".into()));
    }
    let n = a.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let diag = a.diagonal();
    if let Some(&d) = diag.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::IndefiniteRitz(d));
    }
    let inv_sqrt: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let b = a.scaled_symmetric(&inv_sqrt);
    let log_diag: f64 = diag.iter().map(|d| d.ln()).sum();
    let trace_sq: f64 = b.values().iter().map(|v| v * v).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let norm = 1.0 / nf.sqrt();
    let (mut ys, mut x1, mut x2) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..probes {
        let q0: Vec<f64> = (0..n)
            .map(|_| if rng.random::<bool>() { norm } else { -norm })
            .collect();
        let (alphas, betas) = lanczos_tridiag(&b, q0, steps);
        ys.push(nf * quadrature_log(&alphas, &betas)?);
        let beta1 = betas.first().copied().unwrap_or(0.0);
        x1.push(nf * alphas[0]);
        x2.push(nf * (alphas[0] * alphas[0] + beta1 * beta1));
    }
    let (c1, c2) = control_coefficients(&ys, &x1, &x2);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / probes as f64;
    let estimate = mean(&ys) - c1 * (mean(&x1) - nf) - c2 * (mean(&x2) - trace_sq);
    Ok(log_diag + estimate)
}

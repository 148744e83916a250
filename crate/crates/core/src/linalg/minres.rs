//! MINRES for symmetric (possibly indefinite) systems, following the
//! Paige-Saunders recurrences without preconditioning.

use super::SparseSymmetricMatrix;
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    /// `|A x - b|` of the returned iterate.
    pub final_residual_norm: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn true_residual(a: &SparseSymmetricMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    ax.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Solves `A x = rhs`, stopping once `|A x - rhs| <= tol |rhs|`.
///
/// Non-convergence is not an error: the last (lowest-residual) iterate is
/// returned with `converged = false`.
pub fn minres_solve(
    a: &SparseSymmetricMatrix,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, SolverReport)> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let mut x = vec![0.0; n];
    let beta1 = norm(rhs);
    if beta1 == 0.0 {
        return Ok((
            x,
            SolverReport {
                iterations: 0,
                final_residual_norm: 0.0,
                converged: true,
            },
        ));
    }
    let target = tol * beta1;

    let mut r1 = rhs.to_vec();
    let mut r2 = rhs.to_vec();
    let mut y = rhs.to_vec();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1;
    let mut w2 = vec![0.0; n];

    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;

    let mut iterations = 0;
    let mut residual = beta1;
    while iterations < max_iters {
        iterations += 1;
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        a.matvec_into(&v, &mut y);
        if iterations >= 2 {
            let c = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= c * ri;
            }
        }
        let alfa: f64 = v.iter().zip(&y).map(|(p, q)| p * q).sum();
        let c = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= c * ri;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        oldb = beta;
        beta = norm(&r2);

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .iter()
            .zip(&w1)
            .zip(&w2)
            .map(|((vi, a1), a2)| (vi - oldeps * a1 - delta * a2) / gamma)
            .collect();
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi += phi * wi;
        }

        // phibar tracks |r| in exact arithmetic; confirm with a true residual.
        if phibar <= target || beta == 0.0 {
            residual = true_residual(a, &x, rhs);
            if residual <= target || beta == 0.0 {
                break;
            }
        }
    }
    if iterations == max_iters || residual > target {
        residual = true_residual(a, &x, rhs);
    }
    Ok((
        x,
        SolverReport {
            iterations,
            final_residual_norm: residual,
            converged: residual <= target,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_one_iteration() {
        let a = SparseSymmetricMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 4.0];
        let (x, rep) = minres_solve(&a, &b, 1e-10, 50).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn scaled_identity_halves() {
        let a = SparseSymmetricMatrix::scaled_identity(4, 2.0);
        let b = [2.0, 4.0, -6.0, 1.0];
        let (x, rep) = minres_solve(&a, &b, 1e-10, 50).unwrap();
        assert!(rep.converged);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs() {
        let a = SparseSymmetricMatrix::identity(3);
        let (x, rep) = minres_solve(&a, &[0.0; 3], 1e-8, 10).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn indefinite_system() {
        let d = [2.0, 1.0, 0.0, 1.0, -3.0, 1.0, 0.0, 1.0, 1.0];
        let a = SparseSymmetricMatrix::from_dense(3, &d).unwrap();
        let b = [1.0, 2.0, 3.0];
        let (x, rep) = minres_solve(&a, &b, 1e-12, 20).unwrap();
        assert!(rep.converged);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let n = 30;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0 + i as f64;
        }
        let a = SparseSymmetricMatrix::from_dense(n, &d).unwrap();
        let b = vec![1.0; n];
        let (_, rep) = minres_solve(&a, &b, 1e-14, 3).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert!(rep.final_residual_norm > 0.0);
    }

    #[test]
    fn length_mismatch() {
        let a = SparseSymmetricMatrix::identity(3);
        assert!(minres_solve(&a, &[1.0], 1e-8, 10).is_err());
    }
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::SparseSymmetricMatrix;
use crate::{Error, Result};

/// Largest dimension routed through the dense Cholesky path by default.
pub const DEFAULT_DENSE_THRESHOLD: usize = 5000;

/// Exact `log det(A)` and `A^{-1} rhs` through a dense Cholesky factor.
pub fn dense_logdet_solve(a: &SparseSymmetricMatrix, rhs: &[f64]) -> Result<(f64, Vec<f64>)> {
    dense_logdet_solve_limited(a, rhs, DEFAULT_DENSE_THRESHOLD)
}

pub fn dense_logdet_solve_limited(
    a: &SparseSymmetricMatrix,
    rhs: &[f64],
    limit: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = a.dim();
    if n > limit {
        return Err(Error::TooLargeForDense { n, limit });
    }
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let chol = cholesky(a.to_dense())?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Ok((cholesky_logdet(&chol), x.as_slice().to_vec()))
}

pub(crate) fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

pub(crate) fn cholesky_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Cholesky with an escalating diagonal jitter ladder of 0, 1e-10, 1e-8 and
/// 1e-6 times the largest diagonal entry. Returns the factor and the jitter
/// that was needed.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let max_diag = m.diagonal().iter().cloned().fold(0.0, f64::max);
    for rel in [0.0, 1e-10, 1e-8, 1e-6] {
        let jitter = rel * max_diag;
        let mut work = m.clone();
        for i in 0..work.nrows() {
            work[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(work) {
            if jitter > 0.0 {
                log::debug!("Cholesky needed jitter {jitter:e}");
            }
            return Ok((c, jitter));
        }
    }
    Err(Error::NotPositiveDefinite(format!(
        "Cholesky failed even with jitter {:e}",
        1e-6 * max_diag
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_three() {
        let a = SparseSymmetricMatrix::identity(3);
        let (ld, x) = dense_logdet_solve(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ld, 0.0);
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diag_two() {
        let a = SparseSymmetricMatrix::scaled_identity(2, 2.0);
        let (ld, x) = dense_logdet_solve(&a, &[2.0, 4.0]).unwrap();
        assert!((ld - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((ld - 1.386294).abs() < 1e-6);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_spd_fails() {
        let a = SparseSymmetricMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            dense_logdet_solve(&a, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn threshold_enforced() {
        let a = SparseSymmetricMatrix::identity(4);
        assert!(matches!(
            dense_logdet_solve_limited(&a, &[0.0; 4], 3),
            Err(Error::TooLargeForDense { n: 4, limit: 3 })
        ));
    }

    #[test]
    fn jitter_ladder_rescues_semidefinite() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let (_, jitter) = cholesky_with_jitter(&m).unwrap();
        assert!(jitter > 0.0);
    }
}

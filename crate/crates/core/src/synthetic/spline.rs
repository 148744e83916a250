use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Natural cubic spline basis in one variable with the constant column
/// dropped, each column standardized with the mean and standard deviation it
/// has on the fitting inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalSplineBasis {
    pub knots: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NaturalSplineBasis {
    /// Equally spaced knots on `[lo, hi]`, including both ends.
    pub fn fit(lo: f64, hi: f64, n_knots: usize, xs: &[f64]) -> Result<Self> {
        if n_knots < 2 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "spline needs at least two knots on a non-empty interval, got {n_knots} on [{lo}, {hi}]"
            )));
        }
        let knots: Vec<f64> = (0..n_knots)
            .map(|k| lo + (hi - lo) * k as f64 / (n_knots - 1) as f64)
            .collect();
        let cols = n_knots - 1;
        let mut b = Self {
            knots,
            center: vec![0.0; cols],
            scale: vec![1.0; cols],
        };
        if xs.len() > 1 {
            let raw: Vec<Vec<f64>> = xs.iter().map(|&x| b.raw(x)).collect();
            let n = xs.len() as f64;
            for c in 0..cols {
                let mean = raw.iter().map(|r| r[c]).sum::<f64>() / n;
                let var = raw.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                b.center[c] = mean;
                b.scale[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn raw(&self, x: f64) -> Vec<f64> {
        let k = self.knots.len();
        let last = self.knots[k - 1];
        let cube = |t: f64| t.max(0.0).powi(3);
        let d = |j: usize| (cube(x - self.knots[j]) - cube(x - last)) / (last - self.knots[j]);
        let mut out = Vec::with_capacity(k - 1);
        out.push(x);
        for j in 0..k.saturating_sub(2) {
            out.push(d(j) - d(k - 2));
        }
        out
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.raw(x)
            .into_iter()
            .enumerate()
            .map(|(c, v)| (v - self.center[c]) / self.scale[c])
            .collect()
    }

    /// Row-major basis values at every input.
    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().flat_map(|&x| self.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_on_fit_inputs() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let b = NaturalSplineBasis::fit(0.0, 10.0, 5, &xs).unwrap();
        assert_eq!(b.dim(), 4);
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| b.eval(x)).collect();
        for c in 0..4 {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / 50.0;
            let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / 49.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_beyond_boundary_knots() {
        let b = NaturalSplineBasis::fit(0.0, 10.0, 5, &[]).unwrap();
        // Second differences vanish outside the knot span.
        for x0 in [11.0, 20.0, -5.0] {
            let (a, m, c) = (b.eval(x0 - 1.0), b.eval(x0), b.eval(x0 + 1.0));
            for k in 0..4 {
                assert!((a[k] - 2.0 * m[k] + c[k]).abs() < 1e-9, "col {k} at {x0}");
            }
        }
    }
}

use nalgebra::{DMatrix, DVector};

use crate::kernels::Inputs;
use crate::{Error, Result};

/// Observations `z` at `inputs`, with prior-mean design `W` (N x p).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Inputs,
    pub z: Vec<f64>,
    pub design: DMatrix<f64>,
    /// Known per-point noise variances, when the noise is heteroskedastic.
    pub noise: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Inputs, z: Vec<f64>, design: DMatrix<f64>) -> Result<Self> {
        let n = inputs.len();
        if z.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: z.len(),
            });
        }
        if design.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: design.nrows(),
            });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite observation in row {i}")));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite design entry".into()));
        }
        Ok(Self {
            inputs,
            z,
            design,
            noise: None,
        })
    }

    /// Dataset with a constant prior mean (a single column of ones).
    pub fn with_constant_mean(inputs: Inputs, z: Vec<f64>) -> Result<Self> {
        let n = inputs.len();
        Self::new(inputs, z, DMatrix::from_element(n, 1, 1.0))
    }

    /// Dataset with a zero prior mean (`p = 0`).
    pub fn with_zero_mean(inputs: Inputs, z: Vec<f64>) -> Result<Self> {
        let n = inputs.len();
        Self::new(inputs, z, DMatrix::zeros(n, 0))
    }

    pub fn with_noise(mut self, tau2: Vec<f64>) -> Result<Self> {
        if tau2.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: tau2.len(),
            });
        }
        if tau2.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::Data("noise variances must be finite and >= 0".into()));
        }
        self.noise = Some(tau2);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn design_cols(&self) -> usize {
        self.design.ncols()
    }

    /// `z - W beta`.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mean = &self.design * DVector::from_column_slice(beta);
        self.z.iter().zip(mean.iter()).map(|(z, m)| z - m).collect()
    }

    /// Ordinary least squares for `beta`; zero-length when `p = 0`.
    pub fn ols_beta(&self) -> Vec<f64> {
        let p = self.design_cols();
        if p == 0 || self.is_empty() {
            return vec![0.0; p];
        }
        let w = &self.design;
        let z = DVector::from_column_slice(&self.z);
        let svd = w.clone().svd(true, true);
        match svd.solve(&z, 1e-12) {
            Ok(b) => b.as_slice().to_vec(),
            Err(_) => vec![0.0; p],
        }
    }

    /// Axis-aligned bounding box of the inputs.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|k| {
                (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = self.inputs.row(i)[k];
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }
}

use serde::{Deserialize, Serialize};

use super::matern::{matern_correlation, Smoothness};
use super::{squared_distance, Point};
use crate::{Error, Result};

/// Parameters of the location-dependent Matérn kernel whose signal standard
/// deviation `sigma(x)` and squared length-scale `Sigma(x)` are log-linear in
/// caller-supplied basis values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonstationaryParams {
    /// log of the baseline signal standard deviation.
    pub log_sigma0: f64,
    /// log of the baseline squared length-scale.
    pub log_range0: f64,
    /// Coefficients on the first `sigma_coeffs.len()` basis columns.
    #[serde(default)]
    pub sigma_coeffs: Vec<f64>,
    /// Coefficients on the first `range_coeffs.len()` basis columns.
    #[serde(default)]
    pub range_coeffs: Vec<f64>,
    /// Ridge-prior variance of `sigma_coeffs`.
    #[serde(default = "default_reg_var")]
    pub sigma_reg_var: f64,
    /// Ridge-prior variance of `range_coeffs`.
    #[serde(default = "default_reg_var")]
    pub range_reg_var: f64,
    #[serde(default)]
    pub nu: Smoothness,
}

fn default_reg_var() -> f64 {
    1.0
}

impl NonstationaryParams {
    /// Stationary starting point: all basis coefficients zero.
    pub fn flat(sigma0: f64, range0: f64, m_sigma: usize, m_range: usize, nu: Smoothness) -> Self {
        Self {
            log_sigma0: sigma0.ln(),
            log_range0: range0.ln(),
            sigma_coeffs: vec![0.0; m_sigma],
            range_coeffs: vec![0.0; m_range],
            sigma_reg_var: 1.0,
            range_reg_var: 1.0,
            nu,
        }
    }

    pub fn basis_len(&self) -> usize {
        self.sigma_coeffs.len().max(self.range_coeffs.len())
    }
}

/// The core factor of the product kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoreKernelParams {
    StationaryMatern {
        variance: f64,
        length_scale: f64,
        #[serde(default)]
        nu: Smoothness,
    },
    ParametricNonstationary(NonstationaryParams),
    Constant,
}

/// Per-point quantities of the core kernel: `sigma(x)` and `Sigma(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalScale {
    pub sd: f64,
    pub range: f64,
}

impl CoreKernelParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoreKernelParams::StationaryMatern {
                variance,
                length_scale,
                ..
            } => {
                if !(*variance >= 0.0 && variance.is_finite())
                    || !(*length_scale > 0.0 && length_scale.is_finite())
                {
                    return Err(Error::InvalidParameter(format!(
                        "Matern core needs variance >= 0 and length_scale > 0, got {variance}, {length_scale}"
                    )));
                }
            }
            CoreKernelParams::ParametricNonstationary(p) => {
                let finite = p.log_sigma0.is_finite()
                    && p.log_range0.is_finite()
                    && p.sigma_coeffs.iter().chain(&p.range_coeffs).all(|c| c.is_finite());
                if !finite || !(p.sigma_reg_var > 0.0) || !(p.range_reg_var > 0.0) {
                    return Err(Error::InvalidParameter(
                        "nonstationary core parameters must be finite with positive regularization variances"
                            .into(),
                    ));
                }
            }
            CoreKernelParams::Constant => {}
        }
        Ok(())
    }

    /// Number of basis columns the kernel reads from each point.
    pub fn basis_len(&self) -> usize {
        match self {
            CoreKernelParams::ParametricNonstationary(p) => p.basis_len(),
            _ => 0,
        }
    }

    pub fn local(&self, x: Point<'_>) -> LocalScale {
        match self {
            CoreKernelParams::ParametricNonstationary(p) => {
                let log_sd = p
                    .sigma_coeffs
                    .iter()
                    .zip(x.basis)
                    .fold(p.log_sigma0, |acc, (c, s)| acc + c * s);
                let log_range = p
                    .range_coeffs
                    .iter()
                    .zip(x.basis)
                    .fold(p.log_range0, |acc, (c, s)| acc + c * s);
                LocalScale {
                    sd: log_sd.exp(),
                    range: log_range.exp(),
                }
            }
            CoreKernelParams::StationaryMatern { variance, .. } => LocalScale {
                sd: variance.sqrt(),
                range: 1.0,
            },
            CoreKernelParams::Constant => LocalScale { sd: 1.0, range: 1.0 },
        }
    }

    /// Kernel value from precomputed per-point scales.
    pub fn pair(&self, x: Point<'_>, lx: LocalScale, x2: Point<'_>, lx2: LocalScale) -> f64 {
        match self {
            CoreKernelParams::StationaryMatern {
                variance,
                length_scale,
                nu,
            } => {
                let t = squared_distance(x.coords, x2.coords).sqrt() / length_scale;
                variance * matern_correlation(*nu, t)
            }
            CoreKernelParams::ParametricNonstationary(p) => {
                let d = x.coords.len() as f64;
                let mean_range = 0.5 * (lx.range + lx2.range);
                let q = squared_distance(x.coords, x2.coords) / mean_range;
                let prefactor =
                    (lx.range * lx2.range).powf(d / 4.0) / mean_range.powf(d / 2.0);
                lx.sd * lx2.sd * prefactor * matern_correlation(p.nu, q.sqrt())
            }
            CoreKernelParams::Constant => 1.0,
        }
    }
}

/// Evaluates the core kernel between two points.
pub fn core_eval(params: &CoreKernelParams, x: Point<'_>, x2: Point<'_>) -> f64 {
    params.pair(x, params.local(x), x2, params.local(x2))
}

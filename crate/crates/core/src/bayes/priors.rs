use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::kernels::{CoreKernelParams, KernelHyperparameters, NoiseParams, SparseKernelParams};

/// Prior distributions for every inferred quantity.
///
/// Uniform priors are on open intervals; `beta ~ N(0, beta_variance I)`,
/// amplitudes are Bernoulli in their inclusion probabilities, inclusion
/// probabilities are uniform on `(0, 1)` and nonstationary coefficients are
/// `N(0, v)` with `v ~ U(0, reg_variance_upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub beta_variance: f64,
    pub s0_upper: f64,
    /// `D0`, upper bound of the Wendland radius.
    pub r0_upper: f64,
    /// `Dr`, upper bound of the bump radii.
    pub radius_upper: f64,
    /// Per-coordinate `(l_k, u_k)` bounds for bump centroids.
    pub coordinate_bounds: Vec<(f64, f64)>,
    pub reg_variance_upper: f64,
    /// `T_max` in `tau2 ~ U(0, T_max)`.
    pub tau2_upper: f64,
    pub core_variance_upper: f64,
    pub length_scale_upper: f64,
    pub log_sigma0_bounds: (f64, f64),
    pub log_range0_bounds: (f64, f64),
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_variance: 100.0 * 100.0,
            s0_upper: 1e5,
            r0_upper: 1.0,
            radius_upper: 1.0,
            coordinate_bounds: vec![(0.0, 1.0)],
            reg_variance_upper: 1e5,
            tau2_upper: 1e5,
            core_variance_upper: 1e5,
            length_scale_upper: 1.0,
            log_sigma0_bounds: (-10.0, 10.0),
            log_range0_bounds: (-10.0, 10.0),
        }
    }
}

impl PriorSpec {
    /// Priors scaled to a rectangular domain: `D0` and the Matérn length
    /// bound equal the domain diameter, `Dr` half of it.
    pub fn for_domain(bounds: &[(f64, f64)]) -> Self {
        let diameter = bounds
            .iter()
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt();
        Self {
            r0_upper: diameter,
            radius_upper: 0.5 * diameter,
            coordinate_bounds: bounds.to_vec(),
            length_scale_upper: diameter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            self.beta_variance,
            self.s0_upper,
            self.r0_upper,
            self.radius_upper,
            self.reg_variance_upper,
            self.tau2_upper,
            self.core_variance_upper,
            self.length_scale_upper,
        ];
        let bounds_ok = self
            .coordinate_bounds
            .iter()
            .chain([&self.log_sigma0_bounds, &self.log_range0_bounds])
            .all(|(l, u)| l.is_finite() && u.is_finite() && l < u);
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) && bounds_ok {
            Ok(())
        } else {
            Err(crate::Error::Config(
                "prior bounds must be positive, finite and ordered".into(),
            ))
        }
    }
}

/// `log U(lo, hi)` density at `x`, open interval.
pub(crate) fn log_uniform(x: f64, lo: f64, hi: f64) -> f64 {
    if x > lo && x < hi {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub(crate) fn log_normal(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * x * x / var
}

fn log_bernoulli(a: f64, p: f64) -> f64 {
    if a == 1.0 {
        p.ln()
    } else if a == 0.0 {
        (1.0 - p).ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn core_log_prior(core: &CoreKernelParams, priors: &PriorSpec) -> f64 {
    match core {
        CoreKernelParams::StationaryMatern {
            variance,
            length_scale,
            ..
        } => {
            log_uniform(*variance, 0.0, priors.core_variance_upper)
                + log_uniform(*length_scale, 0.0, priors.length_scale_upper)
        }
        CoreKernelParams::ParametricNonstationary(p) => {
            let (sl, su) = priors.log_sigma0_bounds;
            let (rl, ru) = priors.log_range0_bounds;
            let mut lp = log_uniform(p.log_sigma0, sl, su) + log_uniform(p.log_range0, rl, ru);
            lp += log_uniform(p.sigma_reg_var, 0.0, priors.reg_variance_upper);
            lp += log_uniform(p.range_reg_var, 0.0, priors.reg_variance_upper);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            lp += p
                .sigma_coeffs
                .iter()
                .map(|c| log_normal(*c, p.sigma_reg_var))
                .sum::<f64>();
            lp += p
                .range_coeffs
                .iter()
                .map(|c| log_normal(*c, p.range_reg_var))
                .sum::<f64>();
            lp
        }
        CoreKernelParams::Constant => 0.0,
    }
}

fn sparse_log_prior(s: &SparseKernelParams, priors: &PriorSpec) -> f64 {
    let mut lp = log_uniform(s.scale, 0.0, priors.s0_upper);
    for r0 in s.wendland_radius.radii() {
        lp += log_uniform(r0, 0.0, priors.r0_upper);
    }
    for (bump, &pi) in s.bumps.iter().zip(&s.inclusion_probs) {
        lp += log_uniform(bump.radius, 0.0, priors.radius_upper);
        for (k, &h) in bump.centroid.iter().enumerate() {
            let (l, u) = priors
                .coordinate_bounds
                .get(k)
                .copied()
                .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            lp += log_uniform(h, l, u);
        }
        lp += log_uniform(pi, 0.0, 1.0);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp += log_bernoulli(bump.amplitude, pi);
    }
    lp
}

/// Joint log prior density of `(beta, theta)`; `-inf` outside the support.
pub fn log_prior(beta: &[f64], theta: &KernelHyperparameters, priors: &PriorSpec) -> f64 {
    let mut lp: f64 = beta.iter().map(|b| log_normal(*b, priors.beta_variance)).sum();
    lp += core_log_prior(&theta.core, priors);
    if let Some(s) = &theta.sparse {
        lp += sparse_log_prior(s, priors);
    }
    if let NoiseParams::Homoskedastic { tau2 } = theta.noise {
        // Closed at zero so a noiseless model can be fixed at tau2 = 0.
        lp += if tau2 == 0.0 {
            -priors.tau2_upper.ln()
        } else {
            log_uniform(tau2, 0.0, priors.tau2_upper)
        };
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

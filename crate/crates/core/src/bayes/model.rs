use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::priors::PriorSpec;
use crate::kernels::{
    BumpFunction, CoreKernelParams, KernelHyperparameters, NoiseParams, NonstationaryParams,
    Smoothness, SparseKernelParams, WendlandSupport,
};
use crate::{Error, Result};

/// Which core kernel to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoreChoice {
    Matern {
        #[serde(default)]
        nu: Smoothness,
    },
    /// Location-dependent Matérn driven by every basis column of the inputs.
    Nonstationary {
        #[serde(default)]
        nu: Smoothness,
    },
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseChoice {
    pub n1: usize,
    pub n2: usize,
    /// One Wendland radius per coordinate instead of a single radius.
    #[serde(default)]
    pub anisotropic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseChoice {
    /// Scalar `tau2` inferred under its uniform prior.
    #[default]
    Infer,
    Fixed { tau2: f64 },
}

/// Structure of the model to fit. `sparse = None` gives a plain GP with the
/// chosen core kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub core: CoreChoice,
    #[serde(default)]
    pub sparse: Option<SparseChoice>,
    #[serde(default)]
    pub noise: NoiseChoice,
}

/// Location of one continuous parameter inside `(beta, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Beta(usize),
    CoreVariance,
    CoreLength,
    LogSigma0,
    LogRange0,
    SigmaCoeff(usize),
    RangeCoeff(usize),
    SigmaRegVar,
    RangeRegVar,
    Tau2,
    S0,
    R0(usize),
    Centroid { bump: usize, coord: usize },
    Radius(usize),
}

fn sparse(theta: &KernelHyperparameters) -> &SparseKernelParams {
    theta.sparse.as_ref().expect("slot refers to a missing sparse factor")
}

fn sparse_mut(theta: &mut KernelHyperparameters) -> &mut SparseKernelParams {
    theta.sparse.as_mut().expect("slot refers to a missing sparse factor")
}

fn nonstationary(theta: &KernelHyperparameters) -> &NonstationaryParams {
    match &theta.core {
        CoreKernelParams::ParametricNonstationary(p) => p,
        _ => panic!("slot refers to a missing nonstationary core"),
    }
}

fn nonstationary_mut(theta: &mut KernelHyperparameters) -> &mut NonstationaryParams {
    match &mut theta.core {
        CoreKernelParams::ParametricNonstationary(p) => p,
        _ => panic!("slot refers to a missing nonstationary core"),
    }
}

impl Slot {
    pub fn get(self, beta: &[f64], theta: &KernelHyperparameters) -> f64 {
        match self {
            Slot::Beta(k) => beta[k],
            Slot::CoreVariance | Slot::CoreLength => match &theta.core {
                CoreKernelParams::StationaryMatern {
                    variance,
                    length_scale,
                    ..
                } => {
                    if self == Slot::CoreVariance {
                        *variance
                    } else {
                        *length_scale
                    }
                }
                _ => panic!("slot refers to a missing Matern core"),
            },
            Slot::LogSigma0 => nonstationary(theta).log_sigma0,
            Slot::LogRange0 => nonstationary(theta).log_range0,
            Slot::SigmaCoeff(k) => nonstationary(theta).sigma_coeffs[k],
            Slot::RangeCoeff(k) => nonstationary(theta).range_coeffs[k],
            Slot::SigmaRegVar => nonstationary(theta).sigma_reg_var,
            Slot::RangeRegVar => nonstationary(theta).range_reg_var,
            Slot::Tau2 => match theta.noise {
                NoiseParams::Homoskedastic { tau2 } => tau2,
                _ => panic!("slot refers to scalar noise"),
            },
            Slot::S0 => sparse(theta).scale,
            Slot::R0(k) => sparse(theta).wendland_radius.radii()[k],
            Slot::Centroid { bump, coord } => sparse(theta).bumps[bump].centroid[coord],
            Slot::Radius(b) => sparse(theta).bumps[b].radius,
        }
    }

    pub fn set(self, beta: &mut [f64], theta: &mut KernelHyperparameters, v: f64) {
        match self {
            Slot::Beta(k) => beta[k] = v,
            Slot::CoreVariance | Slot::CoreLength => match &mut theta.core {
                CoreKernelParams::StationaryMatern {
                    variance,
                    length_scale,
                    ..
                } => {
                    if self == Slot::CoreVariance {
                        *variance = v
                    } else {
                        *length_scale = v
                    }
                }
                _ => panic!("slot refers to a missing Matern core"),
            },
            Slot::LogSigma0 => nonstationary_mut(theta).log_sigma0 = v,
            Slot::LogRange0 => nonstationary_mut(theta).log_range0 = v,
            Slot::SigmaCoeff(k) => nonstationary_mut(theta).sigma_coeffs[k] = v,
            Slot::RangeCoeff(k) => nonstationary_mut(theta).range_coeffs[k] = v,
            Slot::SigmaRegVar => nonstationary_mut(theta).sigma_reg_var = v,
            Slot::RangeRegVar => nonstationary_mut(theta).range_reg_var = v,
            Slot::Tau2 => theta.noise = NoiseParams::Homoskedastic { tau2: v },
            Slot::S0 => sparse_mut(theta).scale = v,
            Slot::R0(k) => *sparse_mut(theta).wendland_radius.radii_mut()[k] = v,
            Slot::Centroid { bump, coord } => sparse_mut(theta).bumps[bump].centroid[coord] = v,
            Slot::Radius(b) => sparse_mut(theta).bumps[b].radius = v,
        }
    }

    /// Support of the parameter's uniform prior; `None` for unbounded ones.
    pub fn bounds(self, priors: &PriorSpec) -> Option<(f64, f64)> {
        match self {
            Slot::Beta(_) | Slot::SigmaCoeff(_) | Slot::RangeCoeff(_) => None,
            Slot::CoreVariance => Some((0.0, priors.core_variance_upper)),
            Slot::CoreLength => Some((0.0, priors.length_scale_upper)),
            Slot::LogSigma0 => Some(priors.log_sigma0_bounds),
            Slot::LogRange0 => Some(priors.log_range0_bounds),
            Slot::SigmaRegVar | Slot::RangeRegVar => Some((0.0, priors.reg_variance_upper)),
            Slot::Tau2 => Some((0.0, priors.tau2_upper)),
            Slot::S0 => Some((0.0, priors.s0_upper)),
            Slot::R0(_) => Some((0.0, priors.r0_upper)),
            Slot::Centroid { coord, .. } => priors.coordinate_bounds.get(coord).copied(),
            Slot::Radius(_) => Some((0.0, priors.radius_upper)),
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Maps a parameter value into the unconstrained proposal space.
pub(crate) fn to_free(x: f64, bounds: Option<(f64, f64)>) -> f64 {
    match bounds {
        None => x,
        Some((lo, hi)) => {
            let p = (x - lo) / (hi - lo);
            (p / (1.0 - p)).ln()
        }
    }
}

pub(crate) fn from_free(u: f64, bounds: Option<(f64, f64)>) -> f64 {
    match bounds {
        None => u,
        Some((lo, hi)) => lo + (hi - lo) * sigmoid(u),
    }
}

/// `log |dx/du|` of [`from_free`].
pub(crate) fn log_jacobian(u: f64, bounds: Option<(f64, f64)>) -> f64 {
    match bounds {
        None => 0.0,
        Some((lo, hi)) => {
            // log s(u) + log(1 - s(u)) = -|u| - 2 log(1 + e^{-|u|})
            (hi - lo).ln() - u.abs() - 2.0 * (-u.abs()).exp().ln_1p()
        }
    }
}

/// Slots of the three random-walk blocks: `beta`; core, noise, `s0` and
/// `r0`; bump centroids and radii.
pub fn block_slots(beta_len: usize, theta: &KernelHyperparameters, infer_tau2: bool) -> [Vec<Slot>; 3] {
    let b1 = (0..beta_len).map(Slot::Beta).collect();
    let mut b2 = Vec::new();
    match &theta.core {
        CoreKernelParams::StationaryMatern { .. } => {
            b2.extend([Slot::CoreVariance, Slot::CoreLength]);
        }
        CoreKernelParams::ParametricNonstationary(p) => {
            b2.extend([Slot::LogSigma0, Slot::LogRange0]);
            b2.extend((0..p.sigma_coeffs.len()).map(Slot::SigmaCoeff));
            b2.extend((0..p.range_coeffs.len()).map(Slot::RangeCoeff));
            b2.extend([Slot::SigmaRegVar, Slot::RangeRegVar]);
        }
        CoreKernelParams::Constant => {}
    }
    if infer_tau2 && matches!(theta.noise, NoiseParams::Homoskedastic { .. }) {
        b2.push(Slot::Tau2);
    }
    let mut b3 = Vec::new();
    if let Some(s) = &theta.sparse {
        b2.push(Slot::S0);
        b2.extend((0..s.wendland_radius.radii().len()).map(Slot::R0));
        for (b, bump) in s.bumps.iter().enumerate() {
            b3.extend((0..bump.centroid.len()).map(|coord| Slot::Centroid { bump: b, coord }));
            b3.push(Slot::Radius(b));
        }
    }
    [b1, b2, b3]
}

/// Seeded Latin-hypercube sample of `n` points in the box `bounds`.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; bounds.len()]; n];
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            p[k] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    pts
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 1.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn midpoint((lo, hi): (f64, f64)) -> f64 {
    0.5 * (lo + hi)
}

/// Starting ridge variance of the basis coefficients.
const INITIAL_REG_VARIANCE: f64 = 1.0;

/// Deterministic starting point for the sampler.
///
/// `beta` comes from least squares; bump centroids from a Latin hypercube
/// over the centroid bounds; radii at `Dr / 2`, `r0` at `D0 / 2`, all
/// amplitudes on and all inclusion probabilities 1/2. The signal variance
/// starts at the residual variance and `tau2` at a tenth of it. Basis
/// coefficients start at zero with unit ridge variance; other core
/// parameters start at their prior midpoints.
pub fn initial_state(
    spec: &ModelSpec,
    data: &Dataset,
    priors: &PriorSpec,
    seed: u64,
) -> Result<(Vec<f64>, KernelHyperparameters)> {
    priors.validate()?;
    let dim = data.dim();
    if spec.sparse.is_some() && priors.coordinate_bounds.len() != dim {
        return Err(Error::Config(format!(
            "{} centroid bounds given for {dim}-dimensional inputs",
            priors.coordinate_bounds.len()
        )));
    }
    let beta = data.ols_beta();
    let resid_var = sample_variance(&data.residual(&beta));
    let resid_var = if resid_var.is_finite() && resid_var > 0.0 {
        resid_var
    } else {
        1.0
    };
    let clamp_open = |x: f64, (lo, hi): (f64, f64)| {
        let span = hi - lo;
        x.clamp(lo + 1e-6 * span, hi - 1e-6 * span)
    };

    let core = match spec.core {
        CoreChoice::Matern { nu } => CoreKernelParams::StationaryMatern {
            variance: clamp_open(resid_var, (0.0, priors.core_variance_upper)),
            length_scale: 0.5 * priors.length_scale_upper,
            nu,
        },
        CoreChoice::Nonstationary { nu } => {
            let m = data.inputs.basis_dim();
            let mut p = NonstationaryParams::flat(1.0, 1.0, m, m, nu);
            p.log_sigma0 = clamp_open(0.5 * resid_var.ln(), priors.log_sigma0_bounds);
            p.log_range0 = midpoint(priors.log_range0_bounds);
            // Started small: from the middle of its range the ridge variance
            // takes thousands of iterations to come down, and the basis
            // coefficients are unpenalized meanwhile.
            p.sigma_reg_var = clamp_open(INITIAL_REG_VARIANCE, (0.0, priors.reg_variance_upper));
            p.range_reg_var = clamp_open(INITIAL_REG_VARIANCE, (0.0, priors.reg_variance_upper));
            CoreKernelParams::ParametricNonstationary(p)
        }
        CoreChoice::Constant => CoreKernelParams::Constant,
    };

    let noise = if let Some(tau2) = &data.noise {
        NoiseParams::Heteroskedastic {
            tau2_per_point: tau2.clone(),
        }
    } else {
        match spec.noise {
            NoiseChoice::Infer => NoiseParams::Homoskedastic {
                tau2: clamp_open(0.1 * resid_var, (0.0, priors.tau2_upper)),
            },
            NoiseChoice::Fixed { tau2 } => NoiseParams::Homoskedastic { tau2 },
        }
    };

    let sparse = spec.sparse.map(|s| {
        let cells = s.n1 * s.n2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroids = latin_hypercube(cells, &priors.coordinate_bounds, &mut rng);
        let r0 = 0.5 * priors.r0_upper;
        SparseKernelParams {
            scale: 1.0f64.min(0.5 * priors.s0_upper),
            wendland_radius: if s.anisotropic {
                WendlandSupport::Anisotropic(vec![r0; dim])
            } else {
                WendlandSupport::Isotropic(r0)
            },
            n1: s.n1,
            n2: s.n2,
            bumps: centroids
                .into_iter()
                .map(|c| BumpFunction::switch(c, true, 0.5 * priors.radius_upper))
                .collect(),
            inclusion_probs: vec![0.5; cells],
        }
    });

    let theta = KernelHyperparameters { core, sparse, noise };
    theta.validate(dim)?;
    Ok((beta, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Inputs;

    #[test]
    fn transforms_round_trip() {
        for b in [None, Some((0.0, 10.0)), Some((-3.0, 2.0))] {
            for x in [0.1, 1.0, 1.9] {
                let back = from_free(to_free(x, b), b);
                assert!((back - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let b = Some((0.0, 5.0));
        for u in [-30.0, -2.0, 0.0, 0.7, 12.0] {
            let h = 1e-6;
            let fd = (from_free(u + h, b) - from_free(u - h, b)) / (2.0 * h);
            let lj = log_jacobian(u, b);
            assert!((lj.exp() - fd).abs() <= 1e-4 * fd, "u={u}");
        }
    }

    #[test]
    fn latin_hypercube_covers_each_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(8, &[(0.0, 1.0), (2.0, 4.0)], &mut rng);
        for (k, (lo, hi)) in [(0.0, 1.0), (2.0, 4.0)].into_iter().enumerate() {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| ((p[k] - lo) / (hi - lo) * 8.0).floor() as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn initial_state_follows_defaults() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 20.0 + 0.01).collect();
        let z: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
        let data = Dataset::with_constant_mean(Inputs::from_1d(&xs), z).unwrap();
        let priors = PriorSpec::for_domain(&[(0.0, 1.0)]);
        let spec = ModelSpec {
            core: CoreChoice::Matern { nu: Smoothness::FiveHalves },
            sparse: Some(SparseChoice { n1: 2, n2: 2, anisotropic: false }),
            noise: NoiseChoice::Infer,
        };
        let (beta, theta) = initial_state(&spec, &data, &priors, 1).unwrap();
        assert_eq!(beta.len(), 1);
        let s = theta.sparse.as_ref().unwrap();
        assert_eq!(s.wendland_radius, WendlandSupport::Isotropic(0.5));
        assert!(s.bumps.iter().all(|b| b.amplitude == 1.0 && b.radius == 0.25));
        assert!(s.inclusion_probs.iter().all(|p| *p == 0.5));
        assert!(super::super::priors::log_prior(&beta, &theta, &priors).is_finite());
        let again = initial_state(&spec, &data, &priors, 1).unwrap();
        assert_eq!(again.1, theta);
    }

    #[test]
    fn slots_round_trip() {
        let xs = [0.1, 0.5, 0.9];
        let data = Dataset::with_constant_mean(Inputs::from_1d(&xs), vec![0.0, 1.0, 0.5]).unwrap();
        let priors = PriorSpec::for_domain(&[(0.0, 1.0)]);
        let spec = ModelSpec {
            core: CoreChoice::Matern { nu: Smoothness::ThreeHalves },
            sparse: Some(SparseChoice { n1: 1, n2: 2, anisotropic: false }),
            noise: NoiseChoice::Infer,
        };
        let (mut beta, mut theta) = initial_state(&spec, &data, &priors, 0).unwrap();
        for block in block_slots(beta.len(), &theta.clone(), true) {
            for slot in block {
                slot.set(&mut beta, &mut theta, 0.123);
                assert_eq!(slot.get(&beta, &theta), 0.123);
            }
        }
    }
}

//! The TOML run configuration. Every key has a default and unknown keys are
//! rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bayes::{
    BlockToggles, CoreChoice, LikelihoodMethod, McmcConfig, ModelSpec, NoiseChoice, PriorSpec,
    SparseChoice,
};
use crate::kernels::{KernelHyperparameters, Smoothness};
use crate::linalg::{AssemblyPlan, SolverSettings, DEFAULT_DENSE_THRESHOLD, DEFAULT_PROBES, DEFAULT_STEPS, DEFAULT_TOLERANCE};
use crate::synthetic::BenchmarkConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub mcmc: McmcSection,
    pub solver: SolverSection,
    pub predict: PredictSection,
    pub io: IoSection,
    pub benchmark: BenchmarkConfig,
    /// Fixed hyperparameters for `kernel-export`.
    pub kernel: Option<KernelHyperparameters>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.mcmc.to_config().validate()?;
        c.solver.settings(1)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub core: CoreChoice,
    pub sparse: Option<SparseChoice>,
    pub noise: NoiseChoice,
    pub priors: PriorsSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            core: CoreChoice::Matern {
                nu: Smoothness::default(),
            },
            sparse: Some(SparseChoice {
                n1: 2,
                n2: 2,
                anisotropic: false,
            }),
            noise: NoiseChoice::Infer,
            priors: PriorsSection::default(),
        }
    }
}

impl ModelSection {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            core: self.core,
            sparse: self.sparse,
            noise: self.noise,
        }
    }
}

/// Prior bounds. Unset entries scale with the data: `D0` and the
/// length-scale bound take the diameter of the input bounding box, `Dr`
/// half of it, and centroids range over the box.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorsSection {
    pub beta_variance: Option<f64>,
    pub s0_upper: Option<f64>,
    pub r0_upper: Option<f64>,
    pub radius_upper: Option<f64>,
    pub coordinate_bounds: Option<Vec<(f64, f64)>>,
    pub reg_variance_upper: Option<f64>,
    pub tau2_upper: Option<f64>,
    pub core_variance_upper: Option<f64>,
    pub length_scale_upper: Option<f64>,
    pub log_sigma0_bounds: Option<(f64, f64)>,
    pub log_range0_bounds: Option<(f64, f64)>,
}

impl PriorsSection {
    pub fn resolve(&self, data_bounds: &[(f64, f64)]) -> Result<PriorSpec> {
        let bounds = self.coordinate_bounds.clone().unwrap_or_else(|| data_bounds.to_vec());
        let mut p = PriorSpec::for_domain(&bounds);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { p.$f = v.clone(); } )* };
        }
        set!(
            beta_variance,
            s0_upper,
            r0_upper,
            radius_upper,
            reg_variance_upper,
            tau2_upper,
            core_variance_upper,
            length_scale_upper,
            log_sigma0_bounds,
            log_range0_bounds
        );
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub warmup: usize,
    pub adaptation_interval: usize,
    pub initial_scale: f64,
    pub adapt: bool,
    pub method: LikelihoodMethod,
    pub infer_tau2: bool,
    pub flat_likelihood: bool,
    pub blocks: BlockToggles,
}

impl Default for McmcSection {
    fn default() -> Self {
        let c = McmcConfig::default();
        Self {
            seed: 0,
            iterations: c.iterations,
            burn_in_fraction: c.burn_in_fraction,
            thin: c.thin,
            warmup: c.warmup,
            adaptation_interval: c.adaptation_interval,
            initial_scale: c.initial_scale,
            adapt: c.adapt,
            method: c.method,
            infer_tau2: c.infer_tau2,
            flat_likelihood: c.flat_likelihood,
            blocks: c.blocks,
        }
    }
}

impl McmcSection {
    pub fn to_config(&self) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            burn_in_fraction: self.burn_in_fraction,
            thin: self.thin,
            warmup: self.warmup,
            adaptation_interval: self.adaptation_interval,
            initial_scale: self.initial_scale,
            adapt: self.adapt,
            method: self.method,
            infer_tau2: self.infer_tau2,
            flat_likelihood: self.flat_likelihood,
            blocks: self.blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dense_threshold: usize,
    pub probes: usize,
    pub steps: usize,
    pub tolerance: f64,
    pub max_iters_factor: usize,
    pub batch_size: usize,
    /// 0 uses the available hardware parallelism.
    pub workers: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            probes: DEFAULT_PROBES,
            steps: DEFAULT_STEPS,
            tolerance: DEFAULT_TOLERANCE,
            max_iters_factor: 10,
            batch_size: AssemblyPlan::default().batch_size,
            workers: 0,
        }
    }
}

impl SolverSection {
    pub fn settings(&self, workers: usize) -> Result<SolverSettings> {
        if self.probes == 0 || self.steps == 0 || !(self.tolerance > 0.0) || self.max_iters_factor == 0 {
            return Err(Error::Config(
                "solver probes, steps, tolerance and max_iters_factor must be positive".into(),
            ));
        }
        Ok(SolverSettings {
            dense_threshold: self.dense_threshold,
            probes: self.probes,
            steps: self.steps,
            tolerance: self.tolerance,
            max_iters_factor: self.max_iters_factor,
            plan: AssemblyPlan::new(self.batch_size, workers.max(1)).map_err(|e| Error::Config(e.to_string()))?,
            seed: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    /// Posterior draws used, evenly spaced over the sample file.
    pub max_samples: usize,
    /// Simulation columns written; also settable with `--draws`.
    pub draws: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            max_samples: 200,
            draws: 0,
        }
    }
}

/// Default paths; command-line arguments take precedence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub data: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub inputs: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("colour = 1"), Err(Error::Config(_))));
        assert!(RunConfig::parse("[mcmc]\niteratons = 10").is_err());
        assert!(RunConfig::parse("[model.priors]\nr0_uper = 1.0").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse(
            r#"
[model]
core = { kind = "nonstationary", nu = 1.5 }
sparse = { n1 = 4, n2 = 4 }
noise = { kind = "fixed", tau2 = 0.0 }
[model.priors]
r0_upper = 0.3
[mcmc]
seed = 9
iterations = 100
burn_in_fraction = 0.2
[solver]
workers = 2
[benchmark]
scenarios = ["S1", "D1"]
models = ["M1"]
replicates = 3
"#,
        )
        .unwrap();
        assert_eq!(c.mcmc.seed, 9);
        assert_eq!(c.model.sparse.unwrap().n1, 4);
        assert_eq!(c.benchmark.replicates, 3);
        let p = c.model.priors.resolve(&[(0.0, 2.0)]).unwrap();
        assert_eq!(p.r0_upper, 0.3);
        assert_eq!(p.radius_upper, 1.0);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::parse("[mcmc]\nburn_in_fraction = 1.5").is_err());
        assert!(RunConfig::parse("[solver]\nprobes = 0").is_err());
    }
}

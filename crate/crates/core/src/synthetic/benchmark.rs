use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use super::scenarios::{generate_scenario_draw, Scenario, SyntheticDraw};
use super::scoring::{mean_crps, rmse};
use super::spline::NaturalSplineBasis;
use crate::bayes::{
    initial_state, mcmc_run, predict_conditional, CoreChoice, Dataset, McmcConfig, ModelSpec,
    NoiseChoice, PriorSpec, SparseChoice,
};
use crate::kernels::{Inputs, Smoothness};
use crate::linalg::SolverSettings;
use crate::{Error, Result};

/// Models compared in the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchmarkModel {
    /// Stationary Matérn GP.
    M1,
    /// Sparse-discovering kernel with a stationary Matérn core.
    M3,
    /// Sparse-discovering kernel with a location-dependent Matérn core.
    M4,
}

impl BenchmarkModel {
    pub const ALL: [BenchmarkModel; 3] = [BenchmarkModel::M1, BenchmarkModel::M3, BenchmarkModel::M4];

    pub fn tag(self) -> &'static str {
        match self {
            BenchmarkModel::M1 => "M1",
            BenchmarkModel::M3 => "M3",
            BenchmarkModel::M4 => "M4",
        }
    }

    pub fn spec(self, nu: Smoothness, n1: usize, n2: usize) -> ModelSpec {
        let sparse = Some(SparseChoice {
            n1,
            n2,
            anisotropic: false,
        });
        match self {
            BenchmarkModel::M1 => ModelSpec {
                core: CoreChoice::Matern { nu },
                sparse: None,
                noise: NoiseChoice::Infer,
            },
            BenchmarkModel::M3 => ModelSpec {
                core: CoreChoice::Matern { nu },
                sparse,
                noise: NoiseChoice::Infer,
            },
            BenchmarkModel::M4 => ModelSpec {
                core: CoreChoice::Nonstationary { nu },
                sparse,
                noise: NoiseChoice::Infer,
            },
        }
    }
}

impl fmt::Display for BenchmarkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BenchmarkModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(BenchmarkModel::M1),
            "M3" => Ok(BenchmarkModel::M3),
            "M4" => Ok(BenchmarkModel::M4),
            "M2" => Err(Error::Config("model M2 is not supported".into())),
            _ => Err(Error::Config(format!("unknown model `{s}` (expected M1, M3 or M4)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<Scenario>,
    pub models: Vec<BenchmarkModel>,
    pub replicates: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
    /// Matérn smoothness of every fitted core.
    pub nu: Smoothness,
    pub n1: usize,
    pub n2: usize,
    /// Knots of the spline basis driving the location-dependent core.
    pub spline_knots: usize,
    /// At most this many retained draws, evenly spaced, enter prediction.
    pub max_prediction_draws: usize,
    /// Concurrent fits; 0 uses the global pool.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL_GP.to_vec(),
            models: BenchmarkModel::ALL.to_vec(),
            replicates: 20,
            seed: 0,
            mcmc: McmcConfig {
                iterations: 5000,
                burn_in_fraction: 0.5,
                ..McmcConfig::default()
            },
            nu: Smoothness::FiveHalves,
            n1: 4,
            n2: 4,
            spline_knots: 5,
            max_prediction_draws: 100,
            workers: 0,
        }
    }
}

/// Scores of one model on one replicate. Scores are `None` when the fit
/// failed; relative scores also when the reference fit failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub scenario: Scenario,
    pub model: BenchmarkModel,
    pub replicate: usize,
    pub rmse: Option<f64>,
    pub crps: Option<f64>,
    pub rel_rmse: Option<f64>,
    pub rel_crps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub model: BenchmarkModel,
    pub fits: usize,
    pub failures: usize,
    pub mean_rmse: f64,
    pub mean_crps: f64,
    pub mean_rel_rmse: f64,
    pub q05_rel_rmse: f64,
    pub q95_rel_rmse: f64,
    pub mean_rel_crps: f64,
    pub q05_rel_crps: f64,
    pub q95_rel_crps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a `(scenario, replicate, stream)` triple.
pub fn derive_seed(seed: u64, scenario: Scenario, replicate: usize, stream: u64) -> u64 {
    let s = splitmix(seed ^ splitmix(scenario as u64 + 1));
    splitmix(s ^ splitmix((replicate as u64) << 8 | stream))
}

fn fit_and_score(
    draw: &SyntheticDraw,
    model: BenchmarkModel,
    config: &BenchmarkConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    let (lo, hi) = draw.scenario.spec().domain;
    let (train, test) = if model == BenchmarkModel::M4 {
        let basis = NaturalSplineBasis::fit(lo, hi, config.spline_knots, &draw.train_x)?;
        (
            Inputs::from_1d(&draw.train_x).with_basis(basis.dim(), basis.eval_many(&draw.train_x))?,
            Inputs::from_1d(&draw.test_x).with_basis(basis.dim(), basis.eval_many(&draw.test_x))?,
        )
    } else {
        (Inputs::from_1d(&draw.train_x), Inputs::from_1d(&draw.test_x))
    };
    let data = Dataset::with_constant_mean(train, draw.train_z.clone())?;
    let priors = PriorSpec::for_domain(&[(lo, hi)]);
    let spec = model.spec(config.nu, config.n1, config.n2);
    let settings = SolverSettings::default();
    let (beta, theta) = initial_state(&spec, &data, &priors, seed)?;
    let samples = mcmc_run(&data, &priors, beta, theta, &config.mcmc, &settings, seed ^ 0x5EED)?;
    let kept = samples.retained();
    let kept: Vec<_> = if kept.len() > config.max_prediction_draws && config.max_prediction_draws > 0 {
        let k = config.max_prediction_draws;
        (0..k).map(|i| kept[i * kept.len() / k].clone()).collect()
    } else {
        kept.to_vec()
    };
    let query_design = DMatrix::from_element(test.len(), 1, 1.0);
    let pred = predict_conditional(&kept, &data, &test, &query_design, 0, seed, &settings)?;
    if pred.per_draw.is_empty() {
        return Err(Error::NotPositiveDefinite("every posterior draw failed in prediction".into()));
    }
    let e = rmse(&pred.mean, &draw.test_truth)?;
    let mut crps = 0.0;
    for m in &pred.per_draw {
        crps += mean_crps(&m.mean, &m.var, &draw.test_truth)?;
    }
    Ok((e, crps / pred.per_draw.len() as f64))
}

fn run_cell(config: &BenchmarkConfig, scenario: Scenario, replicate: usize) -> Vec<ScoreRow> {
    let spec = scenario.spec();
    let draw = generate_scenario_draw(&spec, derive_seed(config.seed, scenario, replicate, 0));
    let scores: Vec<Option<(f64, f64)>> = config
        .models
        .iter()
        .enumerate()
        .map(|(k, &model)| {
            let d = draw.as_ref().map_err(|e| e.to_string()).ok()?;
            let seed = derive_seed(config.seed, scenario, replicate, 1 + k as u64);
            match fit_and_score(d, model, config, seed) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("{scenario} replicate {replicate} {model}: {e}");
                    None
                }
            }
        })
        .collect();
    if let Err(e) = &draw {
        log::warn!("{scenario} replicate {replicate}: {e}");
    }
    let reference = config
        .models
        .iter()
        .position(|m| *m == BenchmarkModel::M1)
        .and_then(|i| scores[i]);
    config
        .models
        .iter()
        .zip(&scores)
        .map(|(&model, s)| {
            let rel = |pick: fn(&(f64, f64)) -> f64| match (s, reference) {
                (Some(_), Some(_)) if model == BenchmarkModel::M1 => Some(1.0),
                (Some(s), Some(r)) => Some(pick(s) / pick(&r)),
                _ => None,
            };
            ScoreRow {
                scenario,
                model,
                replicate,
                rmse: s.map(|s| s.0),
                crps: s.map(|s| s.1),
                rel_rmse: rel(|s| s.0),
                rel_crps: rel(|s| s.1),
            }
        })
        .collect()
}

/// Fits every model to every replicate of every scenario and scores the
/// conditional predictions at the test inputs.
///
/// Replicates run in parallel; the output is ordered by scenario, then
/// replicate, then model, independent of scheduling.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<ScoreTable> {
    config.mcmc.validate()?;
    if config.models.is_empty() || config.scenarios.is_empty() {
        return Err(Error::Config("benchmark needs at least one scenario and one model".into()));
    }
    if config.n1 == 0 || config.n2 == 0 {
        return Err(Error::Config("n1 and n2 must be positive".into()));
    }
    let cells: Vec<(Scenario, usize)> = config
        .scenarios
        .iter()
        .flat_map(|&s| (0..config.replicates).map(move |r| (s, r)))
        .collect();
    let work = || -> Vec<Vec<ScoreRow>> {
        cells
            .par_iter()
            .map(|&(s, r)| run_cell(config, s, r))
            .collect()
    };
    let nested = if config.workers > 0 {
        crate::linalg::worker_pool(config.workers).install(work)
    } else {
        work()
    };
    Ok(ScoreTable {
        rows: nested.into_iter().flatten().collect(),
    })
}

fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    Data::new(xs.to_vec()).quantile(q)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

impl ScoreTable {
    /// Means and 5% / 95% quantiles per scenario and model, over the
    /// replicates where the score exists.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(Scenario, BenchmarkModel)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.scenario, r.model)) {
                keys.push((r.scenario, r.model));
            }
        }
        keys.into_iter()
            .map(|(scenario, model)| {
                let rows: Vec<&ScoreRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.scenario == scenario && r.model == model)
                    .collect();
                let pick = |f: fn(&ScoreRow) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
                let (e, c) = (pick(|r| r.rmse), pick(|r| r.crps));
                let (re, rc) = (pick(|r| r.rel_rmse), pick(|r| r.rel_crps));
                SummaryRow {
                    scenario,
                    model,
                    fits: e.len(),
                    failures: rows.len() - e.len(),
                    mean_rmse: mean(&e),
                    mean_crps: mean(&c),
                    mean_rel_rmse: mean(&re),
                    q05_rel_rmse: quantile(&re, 0.05),
                    q95_rel_rmse: quantile(&re, 0.95),
                    mean_rel_crps: mean(&rc),
                    q05_rel_crps: quantile(&rc, 0.05),
                    q95_rel_crps: quantile(&rc, 0.95),
                }
            })
            .collect()
    }

    /// Per-replicate scores; missing cells are empty fields.
    pub fn write_raw_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Data(format!("writing scores: {e}"));
        out.write_record(["scenario", "model", "replicate", "rmse", "crps", "rel_rmse", "rel_crps"])
            .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.scenario.tag().to_string(),
                r.model.tag().to_string(),
                r.replicate.to_string(),
                cell(r.rmse),
                cell(r.crps),
                cell(r.rel_rmse),
                cell(r.rel_crps),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Data(format!("writing scores: {e}")))
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Data(format!("writing summary: {e}"));
        out.write_record([
            "scenario",
            "model",
            "fits",
            "failures",
            "mean_rmse",
            "mean_crps",
            "mean_rel_rmse",
            "q05_rel_rmse",
            "q95_rel_rmse",
            "mean_rel_crps",
            "q05_rel_crps",
            "q95_rel_crps",
        ])
        .map_err(io)?;
        let f = |x: f64| cell(x.is_finite().then_some(x));
        for s in self.summary() {
            out.write_record([
                s.scenario.tag().to_string(),
                s.model.tag().to_string(),
                s.fits.to_string(),
                s.failures.to_string(),
                f(s.mean_rmse),
                f(s.mean_crps),
                f(s.mean_rel_rmse),
                f(s.q05_rel_rmse),
                f(s.q95_rel_rmse),
                f(s.mean_rel_crps),
                f(s.q05_rel_crps),
                f(s.q95_rel_crps),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Data(format!("writing summary: {e}")))
    }
}

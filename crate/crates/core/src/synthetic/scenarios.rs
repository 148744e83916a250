//! Ground-truth generators. The covariance formulas here are written out
//! directly rather than through the `kernels` module, so benchmark truth does
//! not depend on the code being benchmarked.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky_with_jitter;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
    D1,
}

impl Scenario {
    pub const ALL_GP: [Scenario; 4] = [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
            Scenario::D1 => "D1",
        }
    }

    /// Default generation settings for the scenario.
    pub fn spec(self) -> ScenarioSpec {
        let (domain, tau2) = match self {
            Scenario::S1 | Scenario::S2 => ((0.0, 10.0), 0.1),
            Scenario::S3 => ((0.0, 10.0), 0.475),
            Scenario::S4 => ((0.0, 10.0), 0.506),
            Scenario::D1 => ((0.0, 1.0), 0.1),
        };
        ScenarioSpec {
            scenario: self,
            domain,
            n_train: 50,
            n_test: 300,
            tau2,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            "S4" => Ok(Scenario::S4),
            "D1" => Ok(Scenario::D1),
            _ => Err(Error::Config(format!("unknown scenario `{s}` (expected S1-S4 or D1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub domain: (f64, f64),
    pub n_train: usize,
    pub n_test: usize,
    /// Variance of the white noise added to training observations.
    pub tau2: f64,
}

/// One replicate: noisy training data and noise-free test truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDraw {
    pub scenario: Scenario,
    pub seed: u64,
    pub train_x: Vec<f64>,
    pub train_z: Vec<f64>,
    pub test_x: Vec<f64>,
    pub test_truth: Vec<f64>,
    pub tau2: f64,
}

fn matern52(d: f64, rho: f64) -> f64 {
    let a = 5f64.sqrt() * d / rho;
    (1.0 + a + a * a / 3.0) * (-a).exp()
}

fn wendland(d: f64, r0: f64) -> f64 {
    let t = d / r0;
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - t).powi(8) * (35.0 * t.powi(3) + 25.0 * t * t + 8.0 * t + 1.0)
    }
}

fn s3_variance(x: f64) -> f64 {
    0.05 * (x - 5.0).powi(4) + 0.001
}

fn s4_variance(x: f64) -> f64 {
    0.2 * ((x - 10.0) / 3.0).powi(4) + 0.1
}

fn s4_range(x: f64) -> f64 {
    0.06 * (x / 3.0).powi(3) + 0.03
}

/// The generating covariance of a GP scenario between two scalar inputs.
pub fn scenario_covariance(scenario: Scenario, x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    match scenario {
        Scenario::S1 => matern52(d, 0.5),
        Scenario::S2 => wendland(d, 1.5),
        Scenario::S3 => (s3_variance(x) * s3_variance(y)).sqrt() * wendland(d, 0.75),
        Scenario::S4 => {
            let (sx, sy) = (s4_range(x), s4_range(y));
            let mean = 0.5 * (sx + sy);
            let pre = (sx * sy).powf(0.25) / mean.sqrt();
            (s4_variance(x) * s4_variance(y)).sqrt() * pre * matern52(d / mean.sqrt(), 1.0)
        }
        Scenario::D1 => piecewise_ground_truth(x) * piecewise_ground_truth(y),
    }
}

/// `-1` on `(0, 0.25]` and `(0.5, 0.75]`, `+1` on `(0.25, 0.5]` and `(0.75, 1)`.
pub fn piecewise_ground_truth(x: f64) -> f64 {
    if x <= 0.25 || (x > 0.5 && x <= 0.75) {
        -1.0
    } else {
        1.0
    }
}

/// Evenly spaced test inputs: endpoints included on the GP domain, cell
/// midpoints on the open unit interval.
fn test_inputs(spec: &ScenarioSpec) -> Vec<f64> {
    let (lo, hi) = spec.domain;
    let m = spec.n_test;
    match spec.scenario {
        Scenario::D1 => (0..m).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / m as f64).collect(),
        _ if m == 1 => vec![0.5 * (lo + hi)],
        _ => (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect(),
    }
}

/// Draws training inputs uniformly on the domain, the truth jointly at
/// training and test inputs, and noise on the training values only.
pub fn generate_scenario_draw(spec: &ScenarioSpec, seed: u64) -> Result<SyntheticDraw> {
    if !(spec.tau2 >= 0.0 && spec.tau2.is_finite()) {
        return Err(Error::Config(format!("noise variance must be >= 0, got {}", spec.tau2)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.domain;
    let train_x: Vec<f64> = (0..spec.n_train)
        .map(|_| {
            // (lo, hi) open on the left so D1 inputs stay inside (0, 1).
            let u: f64 = rng.random();
            hi - (hi - lo) * u
        })
        .collect();
    let test_x = test_inputs(spec);
    let all: Vec<f64> = train_x.iter().chain(&test_x).copied().collect();
    let truth: Vec<f64> = match spec.scenario {
        Scenario::D1 => all.iter().map(|&x| piecewise_ground_truth(x)).collect(),
        sc => {
            let n = all.len();
            let cov = DMatrix::from_fn(n, n, |i, j| scenario_covariance(sc, all[i], all[j]));
            let (chol, jitter) = cholesky_with_jitter(&cov).map_err(|e| {
                Error::NotPositiveDefinite(format!("{sc} covariance at {n} points: {e}"))
            })?;
            if jitter > 0.0 {
                log::debug!("{sc} covariance needed jitter {jitter:e}");
            }
            let o = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            (chol.l() * o).as_slice().to_vec()
        }
    };
    let noise = Normal::new(0.0, spec.tau2.sqrt()).expect("finite noise scale");
    let train_z = truth[..spec.n_train]
        .iter()
        .map(|f| f + noise.sample(&mut rng))
        .collect();
    Ok(SyntheticDraw {
        scenario: spec.scenario,
        seed,
        train_x,
        train_z,
        test_x,
        test_truth: truth[spec.n_train..].to_vec(),
        tau2: spec.tau2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_values() {
        assert_eq!(piecewise_ground_truth(0.1), -1.0);
        assert_eq!(piecewise_ground_truth(0.3), 1.0);
        assert_eq!(piecewise_ground_truth(0.6), -1.0);
        assert_eq!(piecewise_ground_truth(0.9), 1.0);
        assert_eq!(piecewise_ground_truth(0.25), -1.0);
        assert_eq!(piecewise_ground_truth(0.5), 1.0);
    }

    #[test]
    fn s3_minimum_variance_at_five() {
        assert!((scenario_covariance(Scenario::S3, 5.0, 5.0) - 0.001).abs() < 1e-15);
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 10.0).collect();
        let min = grid
            .iter()
            .map(|&x| scenario_covariance(Scenario::S3, x, x))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, scenario_covariance(Scenario::S3, 5.0, 5.0));
    }

    #[test]
    fn s4_diagonal_is_signal_variance() {
        for x in [0.0, 3.3, 10.0] {
            assert!((scenario_covariance(Scenario::S4, x, x) - s4_variance(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_scenario_draw(&Scenario::S2.spec(), 17).unwrap();
        let b = generate_scenario_draw(&Scenario::S2.spec(), 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_x.len(), 50);
        assert_eq!(a.test_x.len(), 300);
        assert_eq!(a.test_x[299], 10.0);
    }

    #[test]
    fn d1_layout() {
        let d = generate_scenario_draw(&Scenario::D1.spec(), 3).unwrap();
        assert!(d.train_x.iter().all(|x| *x > 0.0 && *x <= 1.0));
        assert!((d.test_x[0] - 0.5 / 300.0).abs() < 1e-15);
        assert!(d.test_truth.iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn tags_round_trip() {
        for s in [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4, Scenario::D1] {
            assert_eq!(s.tag().parse::<Scenario>().unwrap(), s);
        }
        assert!("S5".parse::<Scenario>().is_err());
    }
}

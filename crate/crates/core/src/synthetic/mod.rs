//! Synthetic scenarios, scoring rules and the simulation-study runner.

mod benchmark;
mod scenarios;
mod scoring;
mod spline;

pub use benchmark::{
    derive_seed, run_benchmark, BenchmarkConfig, BenchmarkModel, ScoreRow, ScoreTable, SummaryRow,
};
pub use scenarios::{
    generate_scenario_draw, piecewise_ground_truth, scenario_covariance, Scenario, ScenarioSpec,
    SyntheticDraw,
};
pub use scoring::{crps_gaussian, mean_crps, rmse};
pub use spline::NaturalSplineBasis;

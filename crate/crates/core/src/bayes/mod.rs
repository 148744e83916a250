//! Bayesian inference for the sparse-discovering GP: priors, the marginal
//! likelihood, the blocked adaptive sampler and posterior prediction.

mod data;
mod likelihood;
mod mcmc;
mod model;
mod predict;
mod priors;

pub use data::Dataset;
pub use likelihood::{factorize, log_marginal_likelihood, Factorization, LikelihoodMethod};
pub use mcmc::{
    adaptive_proposal_update, gibbs_pi_update, mcmc_run, BlockAcceptance, BlockState, BlockToggles,
    ChainState, Draw, McmcConfig, PosteriorSampleSet,
};
pub use model::{
    block_slots, initial_state, latin_hypercube, CoreChoice, ModelSpec, NoiseChoice, Slot,
    SparseChoice,
};
pub use predict::{
    cross_covariance, predict_conditional, predict_unconditional, DrawMoments, PredictionResult,
    UnconditionalSampler,
};
pub use priors::{log_prior, PriorSpec};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::likelihood::{factorize, Factorization, LikelihoodMethod};
use super::model::{block_slots, from_free, log_jacobian, to_free, Slot};
use super::priors::{log_prior, PriorSpec};
use crate::kernels::KernelHyperparameters;
use crate::linalg::SolverSettings;
use crate::{Error, Result};

/// Which blocks are updated. Frozen blocks keep their initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockToggles {
    pub beta: bool,
    pub core: bool,
    pub bumps: bool,
    pub amplitudes: bool,
    pub inclusion: bool,
}

impl Default for BlockToggles {
    fn default() -> Self {
        Self {
            beta: true,
            core: true,
            bumps: true,
            amplitudes: true,
            inclusion: true,
        }
    }
}

impl BlockToggles {
    /// Only `beta` moves.
    pub fn beta_only() -> Self {
        Self {
            beta: true,
            core: false,
            bumps: false,
            amplitudes: false,
            inclusion: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: usize,
    /// Leading share of iterations discarded as burn-in.
    pub burn_in_fraction: f64,
    /// Keep every `thin`-th iteration.
    pub thin: usize,
    /// Iterations of fixed isotropic proposals before adaptation starts.
    pub warmup: usize,
    pub adaptation_interval: usize,
    /// Proposal standard deviation per transformed coordinate during warmup.
    pub initial_scale: f64,
    pub adapt: bool,
    pub method: LikelihoodMethod,
    /// Scalar `tau2` is inferred (otherwise held at its initial value).
    pub infer_tau2: bool,
    /// Replace the likelihood by a constant, sampling the prior.
    pub flat_likelihood: bool,
    pub blocks: BlockToggles,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in_fraction: 0.8,
            thin: 1,
            warmup: 200,
            adaptation_interval: 50,
            initial_scale: 0.1,
            adapt: true,
            method: LikelihoodMethod::Auto,
            infer_tau2: true,
            flat_likelihood: false,
            blocks: BlockToggles::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!(
                "burn_in_fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            )));
        }
        if self.thin == 0 || self.adaptation_interval == 0 {
            return Err(Error::Config("thin and adaptation_interval must be positive".into()));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::Config("initial_scale must be positive".into()));
        }
        Ok(())
    }

    /// Number of leading iterations treated as burn-in.
    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.iterations as f64).round() as usize
    }
}

/// Random-walk state of one block, in transformed coordinates.
#[derive(Debug, Clone)]
pub struct BlockState {
    pub name: &'static str,
    pub slots: Vec<Slot>,
    pub proposal_cov: DMatrix<f64>,
    proposal_chol: DMatrix<f64>,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    pub history_len: usize,
    pub accepted: usize,
    pub proposed: usize,
}

impl BlockState {
    pub fn new(name: &'static str, slots: Vec<Slot>, initial_scale: f64) -> Self {
        let d = slots.len();
        let cov = DMatrix::identity(d, d) * (initial_scale * initial_scale);
        Self {
            name,
            proposal_chol: DMatrix::identity(d, d) * initial_scale,
            proposal_cov: cov,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
            history_len: 0,
            slots,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    /// Adds one state to the running mean and scatter (Welford).
    pub fn record(&mut self, u: &[f64]) {
        let x = DVector::from_column_slice(u);
        self.history_len += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.history_len as f64;
        let delta2 = &x - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    /// Empirical covariance of the recorded history.
    pub fn empirical_cov(&self) -> Option<DMatrix<f64>> {
        (self.history_len >= 2).then(|| &self.scatter / (self.history_len - 1) as f64)
    }

    pub fn set_proposal(&mut self, cov: DMatrix<f64>) -> bool {
        match cov.clone().cholesky() {
            Some(c) => {
                self.proposal_chol = c.l();
                self.proposal_cov = cov;
                true
            }
            None => false,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Sets the proposal covariance to `(2.38^2 / d) S + eps I`, with `S` the
/// empirical covariance of the block history and `eps = 1e-6 tr(S) / d`.
/// When `S` has zero trace the previous proposal's trace sets `eps`. Returns
/// false, leaving the proposal unchanged, when fewer than two states are
/// recorded or the result is not positive definite.
pub fn adaptive_proposal_update(block: &mut BlockState) -> bool {
    let d = block.dim();
    let Some(emp) = block.empirical_cov() else {
        return false;
    };
    if d == 0 || emp.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let tr = emp.trace();
    let floor_trace = if tr > 0.0 { tr } else { block.proposal_cov.trace() };
    let eps = 1e-6 * floor_trace / d as f64;
    let cov = emp * (2.38 * 2.38 / d as f64) + DMatrix::identity(d, d) * eps;
    block.set_proposal(cov)
}

/// One draw of an inclusion probability from its full conditional
/// `Beta(1 + a, 2 - a)`.
pub fn gibbs_pi_update(a: bool, rng: &mut impl Rng) -> f64 {
    let a: f64 = if a { 1.0 } else { 0.0 };
    let dist: Beta<f64> = Beta::new(1.0 + a, 2.0 - a).expect("valid Beta parameters");
    dist.sample(rng).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Current position of the chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub theta: KernelHyperparameters,
    pub blocks: Vec<BlockState>,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub iteration: usize,
}

impl ChainState {
    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_prior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub theta: KernelHyperparameters,
    pub log_likelihood: f64,
    pub log_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub accepted: usize,
    pub proposed: usize,
}

/// Stored draws in chain order; the first `burn_in` are burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSampleSet {
    pub draws: Vec<Draw>,
    pub burn_in: usize,
    pub acceptance: Vec<BlockAcceptance>,
}

impl PosteriorSampleSet {
    /// Draws after burn-in.
    pub fn retained(&self) -> &[Draw] {
        &self.draws[self.burn_in.min(self.draws.len())..]
    }

    /// Share of retained draws in which each bump is switched on.
    pub fn inclusion_frequencies(&self) -> Vec<f64> {
        let kept = self.retained();
        let Some(cells) = kept
            .first()
            .and_then(|d| d.theta.sparse.as_ref())
            .map(|s| s.bumps.len())
        else {
            return Vec::new();
        };
        let mut freq = vec![0.0; cells];
        for d in kept {
            if let Some(s) = &d.theta.sparse {
                for (f, b) in freq.iter_mut().zip(&s.bumps) {
                    *f += b.amplitude;
                }
            }
        }
        freq.iter().map(|f| f / kept.len() as f64).collect()
    }
}

struct Target<'a> {
    data: &'a Dataset,
    priors: &'a PriorSpec,
    config: &'a McmcConfig,
    settings: &'a SolverSettings,
}

impl Target<'_> {
    fn factorize(&self, theta: &KernelHyperparameters) -> Result<Option<Factorization>> {
        if self.config.flat_likelihood || self.data.is_empty() {
            return Ok(None);
        }
        factorize(self.data, theta, self.config.method, self.settings).map(Some)
    }

    fn log_lik(&self, fact: &Option<Factorization>, beta: &[f64]) -> Result<f64> {
        match fact {
            None => Ok(0.0),
            Some(f) => f.log_density(&self.data.residual(beta)),
        }
    }
}

fn free_coords(block: &BlockState, beta: &[f64], theta: &KernelHyperparameters, priors: &PriorSpec) -> Vec<f64> {
    block
        .slots
        .iter()
        .map(|s| to_free(s.get(beta, theta), s.bounds(priors)))
        .collect()
}

/// Runs the blocked sampler from `(beta, theta)`.
///
/// Each iteration updates, in order, `beta`, the core/noise/`s0`/`r0`
/// block and the centroid/radius block by adaptive random-walk Metropolis
/// in transformed coordinates, then proposes all amplitudes jointly from
/// their Bernoulli priors, then redraws each inclusion probability from its
/// Beta full conditional. All randomness comes from a `ChaCha8Rng` seeded
/// with `seed`. A failed likelihood evaluation rejects the proposal.
pub fn mcmc_run(
    data: &Dataset,
    priors: &PriorSpec,
    beta: Vec<f64>,
    theta: KernelHyperparameters,
    config: &McmcConfig,
    settings: &SolverSettings,
    seed: u64,
) -> Result<PosteriorSampleSet> {
    config.validate()?;
    priors.validate()?;
    let lp = log_prior(&beta, &theta, priors);
    if !lp.is_finite() {
        return Err(Error::InvalidParameter(
            "initial state lies outside the prior support".into(),
        ));
    }
    let target = Target {
        data,
        priors,
        config,
        settings,
    };
    let mut fact = target.factorize(&theta)?;
    let ll = target.log_lik(&fact, &beta)?;

    let [b1, b2, b3] = block_slots(beta.len(), &theta, config.infer_tau2 && data.noise.is_none());
    let toggles = config.blocks;
    let blocks = [("beta", b1, toggles.beta), ("core", b2, toggles.core), ("bumps", b3, toggles.bumps)]
        .into_iter()
        .map(|(name, slots, on)| BlockState::new(name, if on { slots } else { Vec::new() }, config.initial_scale))
        .collect();
    let mut state = ChainState {
        beta,
        theta,
        blocks,
        log_likelihood: ll,
        log_prior: lp,
        iteration: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp_stats = (0usize, 0usize);

    let burn_in = config.burn_in();
    let mut draws = Vec::new();
    let mut stored_burn_in = 0;
    if config.iterations == 0 {
        draws.push(snapshot(&state));
    }
    for it in 1..=config.iterations {
        state.iteration = it;
        for b in 0..state.blocks.len() {
            random_walk_step(&target, &mut state, b, &mut fact, &mut rng);
        }
        if toggles.amplitudes {
            amplitude_step(&target, &mut state, &mut fact, &mut rng, &mut amp_stats);
        }
        if toggles.inclusion {
            inclusion_step(&mut state, priors, &mut rng);
        }
        if config.adapt && it >= config.warmup && (it - config.warmup) % config.adaptation_interval == 0 {
            for block in &mut state.blocks {
                if block.dim() > 0 && !adaptive_proposal_update(block) {
                    log::debug!("block {} kept its previous proposal", block.name);
                }
            }
        }
        #[cfg(debug_assertions)]
        if it % 100 == 0 {
            check_cache(&target, &state);
        }
        if it % config.thin == 0 {
            if it <= burn_in {
                stored_burn_in += 1;
            }
            draws.push(snapshot(&state));
        }
    }

    let mut acceptance: Vec<BlockAcceptance> = state
        .blocks
        .iter()
        .map(|b| BlockAcceptance {
            block: b.name.to_string(),
            accepted: b.accepted,
            proposed: b.proposed,
        })
        .collect();
    acceptance.push(BlockAcceptance {
        block: "amplitudes".into(),
        accepted: amp_stats.0,
        proposed: amp_stats.1,
    });
    Ok(PosteriorSampleSet {
        draws,
        burn_in: stored_burn_in,
        acceptance,
    })
}

#[cfg(debug_assertions)]
fn check_cache(target: &Target<'_>, state: &ChainState) {
    if let Ok(f) = target.factorize(&state.theta) {
        if let Ok(ll) = target.log_lik(&f, &state.beta) {
            debug_assert!(
                (ll - state.log_likelihood).abs() <= 1e-8 * ll.abs().max(1.0),
                "cached log-likelihood {} drifted from {}",
                state.log_likelihood,
                ll
            );
        }
    }
}

fn snapshot(state: &ChainState) -> Draw {
    Draw {
        iteration: state.iteration,
        beta: state.beta.clone(),
        theta: state.theta.clone(),
        log_likelihood: state.log_likelihood,
        log_posterior: state.log_posterior(),
    }
}

fn random_walk_step(
    target: &Target<'_>,
    state: &mut ChainState,
    b: usize,
    fact: &mut Option<Factorization>,
    rng: &mut ChaCha8Rng,
) {
    let d = state.blocks[b].dim();
    if d == 0 {
        return;
    }
    let priors = target.priors;
    let block = &state.blocks[b];
    let u = free_coords(block, &state.beta, &state.theta, priors);
    let xi = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let step = &block.proposal_chol * xi;
    let u_new: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + s).collect();

    let mut beta = state.beta.clone();
    let mut theta = state.theta.clone();
    let mut log_jac = 0.0;
    for ((slot, &uo), &un) in block.slots.iter().zip(&u).zip(&u_new) {
        let bounds = slot.bounds(priors);
        slot.set(&mut beta, &mut theta, from_free(un, bounds));
        log_jac += log_jacobian(un, bounds) - log_jacobian(uo, bounds);
    }
    let beta_only = block.slots.iter().all(|s| matches!(s, Slot::Beta(_)));
    let log_u: f64 = rng.random::<f64>().ln();

    let lp = log_prior(&beta, &theta, priors);
    let mut accepted = false;
    if lp.is_finite() {
        let proposal = if beta_only {
            target.log_lik(fact, &beta).map(|ll| (ll, None))
        } else {
            target
                .factorize(&theta)
                .and_then(|f| target.log_lik(&f, &beta).map(|ll| (ll, f)))
        };
        match proposal {
            Ok((ll, new_fact)) => {
                let log_ratio = ll + lp - state.log_posterior() + log_jac;
                if log_u < log_ratio {
                    accepted = true;
                    state.beta = beta;
                    state.theta = theta;
                    state.log_likelihood = ll;
                    state.log_prior = lp;
                    if !beta_only {
                        *fact = new_fact;
                    }
                }
            }
            Err(e) => log::debug!(
                "iteration {}: {} proposal rejected: {e}",
                state.iteration,
                state.blocks[b].name
            ),
        }
    }
    let u_now = if accepted { u_new } else { u };
    let block = &mut state.blocks[b];
    block.proposed += 1;
    block.accepted += accepted as usize;
    block.record(&u_now);
}

fn amplitude_step(
    target: &Target<'_>,
    state: &mut ChainState,
    fact: &mut Option<Factorization>,
    rng: &mut ChaCha8Rng,
    stats: &mut (usize, usize),
) {
    let Some(s) = &state.theta.sparse else {
        return;
    };
    if s.bumps.is_empty() {
        return;
    }
    let mut theta = state.theta.clone();
    let sp = theta.sparse.as_mut().expect("sparse factor present");
    for (bump, &pi) in sp.bumps.iter_mut().zip(&sp.inclusion_probs) {
        bump.amplitude = if rng.random::<f64>() < pi { 1.0 } else { 0.0 };
    }
    let log_u: f64 = rng.random::<f64>().ln();
    stats.1 += 1;
    if theta == state.theta {
        stats.0 += 1;
        return;
    }
    // Independence proposal from the Bernoulli prior: the prior and proposal
    // terms cancel, leaving the likelihood ratio.
    let proposal = target
        .factorize(&theta)
        .and_then(|f| target.log_lik(&f, &state.beta).map(|ll| (ll, f)));
    match proposal {
        Ok((ll, f)) => {
            if log_u < ll - state.log_likelihood {
                stats.0 += 1;
                state.log_prior = log_prior(&state.beta, &theta, target.priors);
                state.theta = theta;
                state.log_likelihood = ll;
                *fact = f;
            }
        }
        Err(e) => log::debug!("iteration {}: amplitude proposal rejected: {e}", state.iteration),
    }
}

fn inclusion_step(state: &mut ChainState, priors: &PriorSpec, rng: &mut ChaCha8Rng) {
    let Some(s) = state.theta.sparse.as_mut() else {
        return;
    };
    for (pi, bump) in s.inclusion_probs.iter_mut().zip(&s.bumps) {
        *pi = gibbs_pi_update(bump.amplitude == 1.0, rng);
    }
    state.log_prior = log_prior(&state.beta, &state.theta, priors);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::model::{initial_state, CoreChoice, ModelSpec, NoiseChoice, SparseChoice};
    use crate::kernels::{Inputs, Smoothness};

    #[test]
    fn gibbs_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let on: Vec<f64> = (0..n).map(|_| gibbs_pi_update(true, &mut rng)).collect();
        let off: Vec<f64> = (0..n).map(|_| gibbs_pi_update(false, &mut rng)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let m1 = mean(&on);
        assert!((m1 - 2.0 / 3.0).abs() < 0.005);
        assert!((mean(&off) - 1.0 / 3.0).abs() < 0.005);
        let var = on.iter().map(|x| (x - m1).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0 / 18.0).abs() < 0.1 / 18.0);
    }

    #[test]
    fn constant_history_collapses_to_floor() {
        let mut b = BlockState::new("t", vec![Slot::Beta(0), Slot::Beta(1)], 0.1);
        for _ in 0..10 {
            b.record(&[1.0, 2.0]);
        }
        assert!(adaptive_proposal_update(&mut b));
        let eps = 1e-6 * 0.02 / 2.0;
        let expect = DMatrix::identity(2, 2) * eps;
        assert!((&b.proposal_cov - expect).abs().max() < 1e-20);
    }

    #[test]
    fn identity_history_scales_by_optimal_factor() {
        let mut b = BlockState::new("t", (0..4).map(Slot::Beta).collect(), 0.1);
        // +-e_k pairs give an identity-proportional sample covariance.
        let mut pts = Vec::new();
        for k in 0..4 {
            for s in [1.0, -1.0] {
                let mut p = vec![0.0; 4];
                p[k] = s * 2f64.sqrt();
                pts.push(p);
            }
        }
        for p in &pts {
            b.record(p);
        }
        let emp = b.empirical_cov().unwrap();
        let scale = emp[(0, 0)];
        assert!(adaptive_proposal_update(&mut b));
        let expect = 2.38 * 2.38 / 4.0 * scale + 1e-6 * scale;
        assert!((b.proposal_cov[(0, 0)] - expect).abs() < 1e-12);
        assert!((2.38f64 * 2.38 / 4.0 - 1.4161).abs() < 1e-12);
    }

    #[test]
    fn single_state_leaves_proposal() {
        let mut b = BlockState::new("t", vec![Slot::Beta(0)], 0.1);
        b.record(&[3.0]);
        assert!(!adaptive_proposal_update(&mut b));
        assert!((b.proposal_cov[(0, 0)] - 0.01).abs() < 1e-15);
    }

    fn toy() -> (Dataset, PriorSpec, ModelSpec) {
        let xs: Vec<f64> = (0..15).map(|i| (i as f64 + 0.5) / 15.0).collect();
        let z: Vec<f64> = xs.iter().map(|x| (5.0 * x).sin()).collect();
        let data = Dataset::with_constant_mean(Inputs::from_1d(&xs), z).unwrap();
        let priors = PriorSpec::for_domain(&[(0.0, 1.0)]);
        let spec = ModelSpec {
            core: CoreChoice::Matern { nu: Smoothness::FiveHalves },
            sparse: Some(SparseChoice { n1: 1, n2: 2, anisotropic: false }),
            noise: NoiseChoice::Infer,
        };
        (data, priors, spec)
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let (data, priors, spec) = toy();
        let (beta, theta) = initial_state(&spec, &data, &priors, 0).unwrap();
        let cfg = McmcConfig { iterations: 0, ..Default::default() };
        let s = mcmc_run(&data, &priors, beta.clone(), theta.clone(), &cfg, &SolverSettings::default(), 1)
            .unwrap();
        assert_eq!(s.draws.len(), 1);
        assert_eq!(s.draws[0].beta, beta);
        assert_eq!(s.draws[0].theta, theta);
        assert_eq!(s.retained().len(), 1);
    }

    #[test]
    fn deterministic_and_finite() {
        let (data, priors, spec) = toy();
        let (beta, theta) = initial_state(&spec, &data, &priors, 0).unwrap();
        let cfg = McmcConfig { iterations: 300, ..Default::default() };
        let run = || {
            mcmc_run(&data, &priors, beta.clone(), theta.clone(), &cfg, &SolverSettings::default(), 9).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 300);
        assert_eq!(a.retained().len(), 60);
        for d in &a.draws {
            assert!(d.log_posterior.is_finite());
            let s = d.theta.sparse.as_ref().unwrap();
            assert!(s.bumps.iter().all(|b| b.amplitude == 0.0 || b.amplitude == 1.0));
            assert!(s.inclusion_probs.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
    }

    #[test]
    fn frozen_blocks_do_not_move() {
        let (data, priors, spec) = toy();
        let (beta, theta) = initial_state(&spec, &data, &priors, 0).unwrap();
        let cfg = McmcConfig {
            iterations: 50,
            blocks: BlockToggles::beta_only(),
            ..Default::default()
        };
        let s = mcmc_run(&data, &priors, beta, theta.clone(), &cfg, &SolverSettings::default(), 2).unwrap();
        assert!(s.draws.iter().all(|d| d.theta == theta));
    }
}

//! Conditional smoothing around a reference ("star") trajectory and the
//! particle Gibbs driver built on it.
//!
//! The star occupies slot 0 of every leaf and of every combined block, so
//! it survives the whole tree unchanged. The other `N - 1` slots of each
//! combination are independent draws from the full product-form weights.

use alloc::vec::Vec;
use rand::RngCore;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::gaussian::GaussianMarginal;
use crate::model::FeynmanKac;
use crate::resampling::{multinomial_indices, Resampler};
use crate::rng::{Role, Stream, StreamKey};
use crate::smoother::{leaf_key, par_map_indices, run_tree, weigh_leaf, BlockEstimate, LeafEstimate, SmoothingRun};

/// A full trajectory `x_{0:T}`, time-major `(T + 1) × d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StarTrajectory {
    state_dim: usize,
    states: Vec<f64>,
}

impl StarTrajectory {
    pub fn new(states: Vec<f64>, state_dim: usize) -> Result<Self> {
        if state_dim == 0 || states.is_empty() || states.len() % state_dim != 0 {
            return Err(Error::InvalidInput("trajectory length is not a multiple of the state dimension".into()));
        }
        if let Some(k) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidReference { t: k / state_dim });
        }
        Ok(StarTrajectory { state_dim, states })
    }

    /// Segment `n` of a block covering `[0, T]`.
    pub fn from_block(block: &BlockEstimate, n: usize) -> Result<Self> {
        if block.start != 0 || n >= block.n_particles {
            return Err(Error::InvalidInput("block does not hold a full trajectory in that slot".into()));
        }
        Self::new(block.trajectory(n), block.state_dim)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn horizon(&self) -> usize {
        self.states.len() / self.state_dim - 1
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

fn check_star<M: FeynmanKac + ?Sized>(model: &M, star: &StarTrajectory) -> Result<()> {
    if star.state_dim != model.state_dim() || star.horizon() != model.horizon() {
        return Err(Error::InvalidInput(alloc::format!(
            "star covers {} steps of dimension {}, model has {} of dimension {}",
            star.horizon() + 1,
            star.state_dim,
            model.horizon() + 1,
            model.state_dim()
        )));
    }
    Ok(())
}

/// Leaves whose particle 0 is `x*_t` and whose particles `1..N` are fresh
/// proposal draws; all `N` are weighted.
pub fn conditional_init_leaves<M: FeynmanKac + ?Sized>(
    model: &M,
    n_particles: usize,
    star: &StarTrajectory,
    seed: u64,
) -> Result<Vec<LeafEstimate>> {
    if n_particles < 2 {
        return Err(Error::Configuration("the conditional smoother needs at least two particles".into()));
    }
    check_star(model, star)?;
    par_map_indices(model.horizon() + 1, |t| {
        let x_star = star.state(t);
        if model.log_proposal_density(t, x_star) == f64::NEG_INFINITY {
            return Err(Error::InvalidReference { t });
        }
        let mut stream = leaf_key(seed, t).stream();
        let mut particles = Vec::with_capacity(n_particles * star.state_dim);
        particles.extend_from_slice(x_star);
        particles.extend(model.sample_proposals(t, n_particles - 1, &mut stream));
        weigh_leaf(model, t, n_particles, particles)
    })
}

/// One conditional smoothing pass. Returns the new star, drawn uniformly
/// among the `N` output trajectories (by weight when `T = 0`), and the run.
pub fn run_cdsmc<M: FeynmanKac + ?Sized>(
    model: &M,
    n_particles: usize,
    star: &StarTrajectory,
    resampler: Resampler,
    seed: u64,
) -> Result<(StarTrajectory, SmoothingRun)> {
    if !resampler.is_exact_iid() {
        return Err(Error::Configuration(alloc::format!(
            "the conditional smoother needs multinomial or rejection resampling, got {}",
            resampler.name()
        )));
    }
    let leaves = conditional_init_leaves(model, n_particles, star, seed)?;
    let run = run_tree(model, leaves, resampler, seed, true)?;
    let mut stream = StreamKey::new(seed, 0, 0, Role::StarSelect).stream();
    let pick = match &run.block.log_weights {
        Some(w) => multinomial_indices(w, 1, &mut stream)?[0],
        None => stream.index(n_particles),
    };
    Ok((StarTrajectory::from_block(&run.block, pick)?, run))
}

/// Per-time fraction of consecutive chain elements whose state changed.
pub fn update_rate(chain: &[StarTrajectory]) -> Result<Vec<f64>> {
    if chain.len() < 2 {
        return Err(Error::InvalidInput("update rate needs at least two chain elements".into()));
    }
    let len = chain[0].horizon() + 1;
    if chain.iter().any(|s| s.horizon() + 1 != len || s.state_dim != chain[0].state_dim) {
        return Err(Error::InvalidInput("chain elements differ in shape".into()));
    }
    let mut counts = alloc::vec![0u64; len];
    for pair in chain.windows(2) {
        for (t, c) in counts.iter_mut().enumerate() {
            if pair[0].state(t) != pair[1].state(t) {
                *c += 1;
            }
        }
    }
    let pairs = (chain.len() - 1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / pairs).collect())
}

/// Shape and rate of the Gamma posterior of a Gaussian precision `λ` under
/// a `Gamma(shape, rate)` prior and zero-mean residuals `r_k ~ N(0, 1/λ)`.
pub fn conjugate_precision(shape: f64, rate: f64, residuals: &[f64]) -> (f64, f64) {
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    (shape + 0.5 * residuals.len() as f64, rate + 0.5 * ss)
}

/// Draws from `Gamma(shape, rate)`.
pub fn sample_gamma(rng: &mut Stream, shape: f64, rate: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::ParameterUpdate(alloc::format!("Gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// Model family driven by the particle Gibbs sampler.
pub trait GibbsTarget {
    type Model: FeynmanKac;

    /// Draws `θ'` from a kernel leaving `p(θ | x_{0:T}, y_{0:T})` invariant.
    fn update_parameters(&self, theta: &[f64], star: &StarTrajectory, rng: &mut Stream) -> Result<Vec<f64>>;

    /// Runs `iterations` IEKS steps at `θ`, warm-started from `cache`.
    /// `Ok(None)` means the model uses its static proposals.
    fn refresh_proposals(
        &self,
        _theta: &[f64],
        _cache: Option<&[GaussianMarginal]>,
        _iterations: usize,
    ) -> Result<Option<Vec<GaussianMarginal>>> {
        Ok(None)
    }

    fn build_model(&self, theta: &[f64], proposals: Option<&[GaussianMarginal]>) -> Result<Self::Model>;
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GibbsState {
    pub theta: Vec<f64>,
    pub star: StarTrajectory,
    pub proposal_cache: Option<Vec<GaussianMarginal>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GibbsConfig {
    pub n_particles: usize,
    pub resampler: Resampler,
    /// IEKS iterations when the chain starts; 0 disables the cache.
    pub initial_ieks_iterations: usize,
    /// IEKS iterations per sweep, warm-started from the cache.
    pub sweep_ieks_iterations: usize,
}

impl GibbsConfig {
    pub fn new(n_particles: usize) -> Self {
        GibbsConfig {
            n_particles,
            resampler: Resampler::Multinomial,
            initial_ieks_iterations: 25,
            sweep_ieks_iterations: 1,
        }
    }
}

/// Result of one sweep besides the new state.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// `changed[t]` is true when `x*_t` moved.
    pub changed: Vec<bool>,
}

impl GibbsState {
    /// Chain start: fills the proposal cache with a cold IEKS run.
    pub fn initialize<G: GibbsTarget + ?Sized>(
        target: &G,
        theta: Vec<f64>,
        star: StarTrajectory,
        config: &GibbsConfig,
    ) -> Result<Self> {
        let proposal_cache = if config.initial_ieks_iterations == 0 {
            None
        } else {
            target.refresh_proposals(&theta, None, config.initial_ieks_iterations)?
        };
        Ok(GibbsState { theta, star, proposal_cache })
    }
}

fn sweep_key(seed: u64, sweep: u64) -> StreamKey {
    StreamKey::new(seed, 0, sweep, Role::GibbsParam)
}

/// One particle Gibbs sweep: parameter update given the star, proposal
/// refresh, then a conditional smoothing pass. On error the caller's state
/// is untouched.
pub fn pgibbs_sweep<G: GibbsTarget + ?Sized>(
    target: &G,
    state: &GibbsState,
    config: &GibbsConfig,
    seed: u64,
    sweep: u64,
) -> Result<(GibbsState, SweepOutcome)> {
    let mut param_stream = sweep_key(seed, sweep).stream();
    let theta = target.update_parameters(&state.theta, &state.star, &mut param_stream)?;
    let proposal_cache = if config.sweep_ieks_iterations == 0 || config.initial_ieks_iterations == 0 {
        None
    } else {
        target.refresh_proposals(&theta, state.proposal_cache.as_deref(), config.sweep_ieks_iterations)?
    };
    let model = target.build_model(&theta, proposal_cache.as_deref())?;
    let smoother_seed = sweep_key(seed, sweep).with_counter(1).stream().next_u64();
    let (star, _) = run_cdsmc(&model, config.n_particles, &state.star, config.resampler, smoother_seed)?;
    let changed = (0..=star.horizon()).map(|t| star.state(t) != state.star.state(t)).collect();
    Ok((GibbsState { theta, star, proposal_cache }, SweepOutcome { changed }))
}

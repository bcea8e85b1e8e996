//! Sequential comparators: a particle filter that resamples at every step
//! and forward-filtering backward-sampling (FFBS).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ln, normalize_log_weights};
use crate::model::{log_init_weight, FeynmanKac};
use crate::resampling::{multinomial_indices, systematic_indices, Resampler};
use crate::rng::{Role, StreamKey};
use crate::smoother::{par_map_indices, BlockEstimate};

/// Where the filter draws new particles from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FilterProposal {
    /// Initial law and transition kernels.
    Bootstrap,
    /// The model's independent proposals `q_t`.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub n_particles: usize,
    pub state_dim: usize,
    /// `particles[t]` is row-major `N × d`.
    pub particles: Vec<Vec<f64>>,
    /// Normalized per time step.
    pub log_weights: Vec<Vec<f64>>,
    /// `ancestors[t][n]` indexes particle `n`'s parent at `t - 1`; empty at `t = 0`.
    pub ancestors: Vec<Vec<usize>>,
    pub log_likelihood: f64,
}

impl FilterOutput {
    pub fn horizon(&self) -> usize {
        self.particles.len() - 1
    }
}

fn filter_key(seed: u64, t: usize) -> StreamKey {
    StreamKey::new(seed, 0, t as u64, Role::Filter)
}

/// Particle filter over `0..=T`, resampling before every propagation.
pub fn particle_filter<M: FeynmanKac + ?Sized>(
    model: &M,
    n_particles: usize,
    resampler: Resampler,
    proposal: FilterProposal,
    seed: u64,
) -> Result<FilterOutput> {
    if n_particles == 0 {
        return Err(Error::Configuration("at least one particle is required".into()));
    }
    let resample = match resampler {
        Resampler::Multinomial => multinomial_indices,
        Resampler::Systematic => systematic_indices,
        other => {
            return Err(Error::Configuration(alloc::format!(
                "the particle filter resamples with multinomial or systematic, got {}",
                other.name()
            )))
        }
    };
    let d = model.state_dim();
    let horizon = model.horizon();
    let log_n = ln(n_particles as f64);
    let mut out = FilterOutput {
        n_particles,
        state_dim: d,
        particles: Vec::with_capacity(horizon + 1),
        log_weights: Vec::with_capacity(horizon + 1),
        ancestors: Vec::with_capacity(horizon + 1),
        log_likelihood: 0.0,
    };
    for t in 0..=horizon {
        let mut stream = filter_key(seed, t).stream();
        let mut xs = vec![0.0; n_particles * d];
        let mut log_w = vec![0.0; n_particles];
        let ancestors = if t == 0 {
            for (x, w) in xs.chunks_exact_mut(d).zip(log_w.iter_mut()) {
                *w = match proposal {
                    FilterProposal::Bootstrap => {
                        model.sample_initial(&mut stream, x);
                        model.log_potential(0, x)
                    }
                    FilterProposal::Independent => {
                        model.sample_proposal(0, &mut stream, x);
                        log_init_weight(model, 0, x)?
                    }
                };
            }
            Vec::new()
        } else {
            let parents = resample(&out.log_weights[t - 1], n_particles, &mut stream)
                .map_err(|_| Error::DegenerateFilter { t: t - 1 })?;
            let prev = &out.particles[t - 1];
            for ((x, w), &a) in xs.chunks_exact_mut(d).zip(log_w.iter_mut()).zip(&parents) {
                let x_prev = &prev[a * d..(a + 1) * d];
                *w = match proposal {
                    FilterProposal::Bootstrap => {
                        model.sample_transition(t, x_prev, &mut stream, x);
                        model.log_potential(t, x)
                    }
                    FilterProposal::Independent => {
                        model.sample_proposal(t, &mut stream, x);
                        model.log_transition_density(t, x_prev, x) + model.log_potential(t, x)
                            - model.log_proposal_density(t, x)
                    }
                };
            }
            parents
        };
        if log_w.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Numerical(alloc::format!("filter weight at t={t}")));
        }
        let total = normalize_log_weights(&mut log_w);
        if total == f64::NEG_INFINITY {
            return Err(Error::DegenerateFilter { t });
        }
        out.log_likelihood += total - log_n;
        out.particles.push(xs);
        out.log_weights.push(log_w);
        out.ancestors.push(ancestors);
    }
    Ok(out)
}

/// Trajectories drawn by backward sampling plus the number of transition
/// densities evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct FfbsSample {
    /// `n_draws` equally weighted trajectories over `[0, T]`.
    pub block: BlockEstimate,
    pub transition_evals: u64,
}

/// Backward simulation: `X_T` from the final weights, then each `X_t` with
/// probability `∝ w^j_t p_{t+1}(X_{t+1} | x^j_t)`.
pub fn ffbs_sample<M: FeynmanKac + ?Sized>(
    filter: &FilterOutput,
    model: &M,
    n_draws: usize,
    seed: u64,
) -> Result<FfbsSample> {
    let n = filter.n_particles;
    let d = filter.state_dim;
    let horizon = filter.horizon();
    if model.horizon() != horizon || model.state_dim() != d {
        return Err(Error::InvalidInput("filter output does not match the model".into()));
    }
    let draws = par_map_indices(n_draws, |k| {
        let mut stream = StreamKey::new(seed, 0, k as u64, Role::BackwardSample).stream();
        let mut traj = vec![0.0; (horizon + 1) * d];
        let mut j = multinomial_indices(&filter.log_weights[horizon], 1, &mut stream)
            .map_err(|_| Error::DegenerateFilter { t: horizon })?[0];
        traj[horizon * d..].copy_from_slice(&filter.particles[horizon][j * d..(j + 1) * d]);
        let mut back = vec![0.0; n];
        for t in (0..horizon).rev() {
            let (head, tail) = traj.split_at_mut((t + 1) * d);
            let next = &tail[..d];
            model.log_transition_col(t + 1, &filter.particles[t], next, &mut back);
            for (b, w) in back.iter_mut().zip(&filter.log_weights[t]) {
                *b += w;
            }
            j = multinomial_indices(&back, 1, &mut stream).map_err(|_| Error::DegenerateFilter { t })?[0];
            head[t * d..].copy_from_slice(&filter.particles[t][j * d..(j + 1) * d]);
        }
        Ok(traj)
    })?;
    let mut states = vec![0.0; (horizon + 1) * n_draws * d];
    for (k, traj) in draws.iter().enumerate() {
        for t in 0..=horizon {
            let dst = (t * n_draws + k) * d;
            states[dst..dst + d].copy_from_slice(&traj[t * d..(t + 1) * d]);
        }
    }
    Ok(FfbsSample {
        block: BlockEstimate {
            start: 0,
            end: horizon,
            n_particles: n_draws,
            state_dim: d,
            states,
            log_weights: None,
            log_norm_const: None,
        },
        transition_evals: (n_draws * horizon * n) as u64,
    })
}

use alloc::vec::Vec;
use smallvec::SmallVec;

use super::{kalman_smoother, GaussianMarginal, LinearGaussianModel};
use crate::density::MvNormal;
use crate::error::{Error, Result};
use crate::model::FeynmanKac;
use crate::rng::Stream;

type Scratch = SmallVec<[f64; 8]>;

/// Gaussian densities built from per-time marginals with covariance scaled
/// by `inflation`.
pub fn proposals_from_marginals(marginals: &[GaussianMarginal], inflation: f64) -> Result<Vec<MvNormal>> {
    if !(inflation > 0.0 && inflation.is_finite()) {
        return Err(Error::Configuration(alloc::format!("covariance inflation {inflation} must be positive")));
    }
    marginals
        .iter()
        .map(|m| {
            let d = m.mean.len();
            let cov: Vec<f64> = (0..d * d).map(|k| m.cov[(k / d, k % d)] * inflation).collect();
            MvNormal::new(m.mean.iter().copied().collect(), &cov)
        })
        .collect()
}

#[derive(Debug, Clone)]
struct AffineStep {
    matrix: Vec<f64>,
    offset: Vec<f64>,
    noise: MvNormal,
    rows: usize,
}

impl AffineStep {
    fn from_affine(a: &super::AffineGaussian) -> Result<Self> {
        let (rows, cols) = a.matrix.shape();
        let matrix = (0..rows * cols).map(|k| a.matrix[(k / cols, k % cols)]).collect();
        let cov: Vec<f64> = (0..rows * rows).map(|k| a.cov[(k / rows, k % rows)]).collect();
        let noise = MvNormal::new(alloc::vec![0.0; rows], &cov)?;
        Ok(AffineStep { matrix, offset: a.offset.iter().copied().collect(), noise, rows })
    }

    #[inline]
    fn apply(&self, x: &[f64]) -> Scratch {
        let cols = x.len();
        (0..self.rows)
            .map(|i| {
                let row = &self.matrix[i * cols..(i + 1) * cols];
                self.offset[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// A linear-Gaussian state-space model as a Feynman-Kac model, with the
/// given Gaussians serving as both proposals `q_t` and auxiliary measures
/// `ν_t` for `t >= 1`.
#[derive(Debug, Clone)]
pub struct LinearGaussianFk {
    dim: usize,
    horizon: usize,
    initial: MvNormal,
    transitions: Vec<AffineStep>,
    observations: Vec<AffineStep>,
    ys: Vec<Vec<f64>>,
    proposals: Vec<MvNormal>,
}

impl LinearGaussianFk {
    /// Transition and observation noise covariances must be positive
    /// definite; `proposals` has one entry per time `0..=T`.
    pub fn new(model: &LinearGaussianModel, proposals: Vec<MvNormal>) -> Result<Self> {
        let horizon = model.horizon();
        let dim = model.state_dim();
        if proposals.len() != horizon + 1 || proposals.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidInput("one proposal of the state dimension is needed per time".into()));
        }
        if model.transitions.len() != horizon || model.observations.len() != horizon + 1 {
            return Err(Error::InvalidInput("model step counts do not match the observations".into()));
        }
        let p0: Vec<f64> = (0..dim * dim).map(|k| model.initial_cov[(k / dim, k % dim)]).collect();
        Ok(LinearGaussianFk {
            dim,
            horizon,
            initial: MvNormal::new(model.initial_mean.iter().copied().collect(), &p0)?,
            transitions: model.transitions.iter().map(AffineStep::from_affine).collect::<Result<_>>()?,
            observations: model.observations.iter().map(AffineStep::from_affine).collect::<Result<_>>()?,
            ys: model.ys.iter().map(|y| y.iter().copied().collect()).collect(),
            proposals,
        })
    }

    /// Uses the exact smoothing marginals, covariances scaled by `inflation`.
    pub fn with_smoothing_proposals(model: &LinearGaussianModel, inflation: f64) -> Result<Self> {
        let marginals = kalman_smoother(model)?.marginals;
        Self::new(model, proposals_from_marginals(&marginals, inflation)?)
    }

    pub fn proposals(&self) -> &[MvNormal] {
        &self.proposals
    }
}

impl FeynmanKac for LinearGaussianFk {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_initial(&self, rng: &mut Stream, out: &mut [f64]) {
        self.initial.sample(rng, out)
    }

    fn log_initial_density(&self, x: &[f64]) -> f64 {
        self.initial.logpdf(x)
    }

    fn sample_transition(&self, t: usize, x_prev: &[f64], rng: &mut Stream, out: &mut [f64]) {
        let step = &self.transitions[t - 1];
        step.noise.sample_centered(&step.apply(x_prev), rng, out)
    }

    fn log_transition_density(&self, t: usize, x_prev: &[f64], x: &[f64]) -> f64 {
        let step = &self.transitions[t - 1];
        step.noise.logpdf_centered(x, &step.apply(x_prev))
    }

    fn log_potential(&self, t: usize, x: &[f64]) -> f64 {
        let step = &self.observations[t];
        step.noise.logpdf_centered(&self.ys[t], &step.apply(x))
    }

    fn log_aux_density(&self, t: usize, x: &[f64]) -> f64 {
        self.proposals[t].logpdf(x)
    }

    fn log_transition_sup(&self, t: usize) -> Option<f64> {
        Some(self.transitions[t - 1].noise.log_peak_density())
    }

    fn sample_proposal(&self, t: usize, rng: &mut Stream, out: &mut [f64]) {
        self.proposals[t].sample(rng, out)
    }

    fn log_proposal_density(&self, t: usize, x: &[f64]) -> f64 {
        self.proposals[t].logpdf(x)
    }

    fn log_transition_row(&self, t: usize, x_prev: &[f64], xs: &[f64], out: &mut [f64]) {
        let step = &self.transitions[t - 1];
        let center = step.apply(x_prev);
        if self.dim == 1 {
            let log_norm = step.noise.logpdf_centered(&center, &center);
            let inv_sd = 1.0 / step.noise.chol()[0];
            let mu = center[0];
            for (o, x) in out.iter_mut().zip(xs) {
                let z = (x - mu) * inv_sd;
                *o = log_norm - 0.5 * z * z;
            }
            return;
        }
        for (o, x) in out.iter_mut().zip(xs.chunks_exact(self.dim)) {
            *o = step.noise.logpdf_centered(x, &center);
        }
    }
}

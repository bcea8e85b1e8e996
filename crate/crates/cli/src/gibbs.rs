//! Particle Gibbs for the theta-logistic model:
//! `θ = (τ_0, τ_1, τ_2, 1/q², 1/r²)`.

use std::path::Path;

use anyhow::{bail, Result};
use dsmc_core::conditional::{conjugate_precision, pgibbs_sweep, sample_gamma, GibbsConfig};
use dsmc_core::gaussian::{ieks, GaussianMarginal};
use dsmc_core::math::normal_logpdf;
use dsmc_core::{Error, GibbsState, GibbsTarget, StarTrajectory, Stream};

use crate::config::{ExperimentConfig, ExperimentKind, GibbsSettings, ThetaPriors};
use crate::data::{theta_logistic_data, DataSource};
use crate::models::{ThetaLogisticModel, ThetaLogisticParams, ThetaLogisticSsm};
use crate::output::{write_chain, ChainRecord};

pub const THETA_NAMES: [&str; 5] = ["tau0", "tau1", "tau2", "prec_x", "prec_y"];

pub fn params_from_theta(theta: &[f64]) -> ThetaLogisticParams {
    ThetaLogisticParams { tau0: theta[0], tau1: theta[1], tau2: theta[2], q: theta[3].sqrt().recip(), r: theta[4].sqrt().recip() }
}

pub fn theta_from_params(p: &ThetaLogisticParams) -> Vec<f64> {
    vec![p.tau0, p.tau1, p.tau2, (p.q * p.q).recip(), (p.r * p.r).recip()]
}

pub struct ThetaLogisticTarget {
    pub ys: Vec<f64>,
    pub priors: ThetaPriors,
    pub tau_step: [f64; 3],
    pub inflation: f64,
}

impl ThetaLogisticTarget {
    fn ssm(&self, theta: &[f64]) -> ThetaLogisticSsm {
        ThetaLogisticSsm { params: params_from_theta(theta), ys: self.ys.clone() }
    }

    /// Log density of `τ` and the latent path given `τ` and `1/q²`, up to a
    /// constant.
    fn log_tau_target(&self, tau: &[f64; 3], prec_x: f64, x: &[f64]) -> f64 {
        let p = &self.priors;
        if tau.iter().any(|v| *v < p.tau_lower || *v > p.tau_upper) {
            return f64::NEG_INFINITY;
        }
        let prior: f64 = tau.iter().map(|v| normal_logpdf(*v, p.tau_mean, p.tau_sd * p.tau_sd)).sum();
        let params = ThetaLogisticParams { tau0: tau[0], tau1: tau[1], tau2: tau[2], q: 1.0, r: 1.0 };
        let var = prec_x.recip();
        prior + x.windows(2).map(|w| normal_logpdf(w[1], params.drift(w[0]), var)).sum::<f64>()
    }
}

impl GibbsTarget for ThetaLogisticTarget {
    type Model = ThetaLogisticModel;

    fn update_parameters(&self, theta: &[f64], star: &StarTrajectory, rng: &mut Stream) -> dsmc_core::Result<Vec<f64>> {
        let x = star.states();
        let pr = &self.priors;
        let mut tau = [theta[0], theta[1], theta[2]];
        let current = self.log_tau_target(&tau, theta[3], x);
        let mut proposal = tau;
        for (v, s) in proposal.iter_mut().zip(&self.tau_step) {
            *v += s * rng.normal();
        }
        let candidate = self.log_tau_target(&proposal, theta[3], x);
        if rng.uniform_pos().ln() < candidate - current {
            tau = proposal;
        }
        let params = ThetaLogisticParams { tau0: tau[0], tau1: tau[1], tau2: tau[2], q: 1.0, r: 1.0 };
        let state_res: Vec<f64> = x.windows(2).map(|w| w[1] - params.drift(w[0])).collect();
        let (a, b) = conjugate_precision(pr.precision_shape, pr.precision_rate, &state_res);
        let prec_x = sample_gamma(rng, a, b)?;
        let obs_res: Vec<f64> = self.ys.iter().zip(x).map(|(y, x)| y - x).collect();
        let (a, b) = conjugate_precision(pr.precision_shape, pr.precision_rate, &obs_res);
        let prec_y = sample_gamma(rng, a, b)?;
        if !(prec_x > 0.0 && prec_y > 0.0 && prec_x.is_finite() && prec_y.is_finite()) {
            return Err(Error::ParameterUpdate(format!("precision draw out of range: {prec_x}, {prec_y}")));
        }
        Ok(vec![tau[0], tau[1], tau[2], prec_x, prec_y])
    }

    fn refresh_proposals(
        &self,
        theta: &[f64],
        cache: Option<&[GaussianMarginal]>,
        iterations: usize,
    ) -> dsmc_core::Result<Option<Vec<GaussianMarginal>>> {
        ieks(&self.ssm(theta), iterations, cache).map(Some)
    }

    fn build_model(&self, theta: &[f64], proposals: Option<&[GaussianMarginal]>) -> dsmc_core::Result<ThetaLogisticModel> {
        let params = params_from_theta(theta);
        let fallback;
        let marginals = match proposals {
            Some(m) => m,
            None => {
                fallback = ThetaLogisticModel::static_marginals(&params, &self.ys);
                &fallback
            }
        };
        ThetaLogisticModel::with_marginals(params, self.ys.clone(), marginals, self.inflation)
    }
}

#[derive(Debug, Clone)]
pub struct PgibbsRun {
    pub records: Vec<ChainRecord>,
    /// Per-time fraction of post-burn-in sweeps that moved `x*_t`.
    pub update_rates: Vec<f64>,
    pub final_state: GibbsState,
    pub data_source: DataSource,
}

/// Runs the chain. The initial star is the smoothed mean path of the initial
/// proposals.
pub fn run_pgibbs(config: &ExperimentConfig) -> Result<PgibbsRun> {
    if config.experiment != ExperimentKind::ThetaLogistic {
        bail!("pgibbs runs the theta-logistic experiment, got {}", config.experiment.name());
    }
    config.validate()?;
    let (ys, data_source) = theta_logistic_data(config.data_path.as_deref(), config.horizon, &config.theta, config.data_seed)?;
    let g: &GibbsSettings = &config.gibbs;
    let target = ThetaLogisticTarget { ys, priors: g.priors, tau_step: g.tau_step, inflation: config.inflation };
    let gibbs = GibbsConfig {
        n_particles: config.n_particles,
        resampler: config.dense_resampler(),
        initial_ieks_iterations: g.initial_ieks_iterations,
        sweep_ieks_iterations: g.sweep_ieks_iterations,
    };
    let theta = theta_from_params(&config.theta);
    let start: Vec<f64> = if g.initial_ieks_iterations > 0 {
        ieks(&target.ssm(&theta), g.initial_ieks_iterations, None)?.iter().map(|m| m.mean[0]).collect()
    } else {
        target.ys.clone()
    };
    let mut state = GibbsState::initialize(&target, theta, StarTrajectory::new(start, 1)?, &gibbs)?;
    let horizon = target.ys.len() - 1;
    let mut counts = vec![0usize; horizon + 1];
    let mut records = Vec::new();
    for sweep in 1..=g.sweeps {
        let (next, outcome) = pgibbs_sweep(&target, &state, &gibbs, config.seed, sweep as u64)?;
        state = next;
        if sweep <= g.burn_in {
            continue;
        }
        for (c, moved) in counts.iter_mut().zip(&outcome.changed) {
            *c += *moved as usize;
        }
        if (sweep - g.burn_in) % g.thin == 0 {
            let moved = outcome.changed.iter().filter(|m| **m).count();
            records.push(ChainRecord {
                sweep,
                theta: state.theta.clone(),
                update_fraction: moved as f64 / (horizon + 1) as f64,
                star: g.record_star.then(|| state.star.states().to_vec()),
            });
        }
        if sweep % 100 == 0 {
            log::info!("sweep {sweep}/{}", g.sweeps);
        }
    }
    let kept = g.sweeps.saturating_sub(g.burn_in).max(1) as f64;
    let update_rates = counts.iter().map(|c| *c as f64 / kept).collect();
    Ok(PgibbsRun { records, update_rates, final_state: state, data_source })
}

pub fn write_pgibbs(path: Option<&Path>, run: &PgibbsRun) -> Result<()> {
    let horizon = run.update_rates.len() - 1;
    match path {
        Some(p) => write_chain(std::io::BufWriter::new(std::fs::File::create(p)?), &THETA_NAMES, horizon, &run.records),
        None => write_chain(std::io::stdout().lock(), &THETA_NAMES, horizon, &run.records),
    }
}

//! Data preparation, replicate execution and CSV emission.

use std::time::Instant;

use anyhow::{bail, Result};
use dsmc_core::baselines::{ffbs_sample, particle_filter, FilterProposal};
use dsmc_core::gaussian::{kalman_smoother, AffineGaussian, LinearGaussianFk, LinearGaussianModel};
use dsmc_core::smoother::{estimate, run_dsmc};
use dsmc_core::{BlockEstimate, FeynmanKac, Role, SmootherConfig, StreamKey};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, FilterProposalChoice, LgssmParams, Method};
use crate::data::{theta_logistic_data, DataSource};
use crate::functionals::{cox_score, rw_fisher_score, state_sum};
use crate::models::{ConstrainedRw, CoxModel, ThetaLogisticModel};
use crate::output::{write_rows, ResultRow};
use crate::stats;

pub enum PreparedModel {
    Cox(CoxModel),
    ThetaLogistic(ThetaLogisticModel),
    ConstrainedRw(ConstrainedRw),
    Lgssm { fk: LinearGaussianFk, exact: LinearGaussianModel },
}

/// A configuration with its data generated or loaded, shared by every
/// replicate.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub horizon: usize,
    pub model: PreparedModel,
    pub data_source: Option<DataSource>,
    pub config_hash: String,
}

/// Scalar LGSSM observations simulated with `data_seed`.
pub fn lgssm_model(params: &LgssmParams, horizon: usize, data_seed: u64) -> LinearGaussianModel {
    let mut rng = StreamKey::new(data_seed, 0, 0, Role::Simulation).stream();
    let mut x = params.p0.sqrt() * rng.normal();
    let mut ys = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        if t > 0 {
            x = params.a * x + params.q.sqrt() * rng.normal();
        }
        ys.push(DVector::from_element(1, x + params.r.sqrt() * rng.normal()));
    }
    LinearGaussianModel::time_invariant(
        DVector::from_element(1, 0.0),
        DMatrix::from_element(1, 1, params.p0),
        AffineGaussian::scalar(params.a, 0.0, params.q),
        AffineGaussian::scalar(1.0, 0.0, params.r),
        ys,
    )
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let config_hash = config.hash()?;
    let horizon = config.horizon.or(config.experiment.default_horizon());
    let mut data_source = None;
    let model = match config.experiment {
        ExperimentKind::Cox => {
            let t = horizon.expect("cox has a default horizon");
            let mut rng = StreamKey::new(config.data_seed, 0, 0, Role::Simulation).stream();
            let (_, ys) = CoxModel::simulate(&config.cox, t, &mut rng)?;
            PreparedModel::Cox(CoxModel::new(config.cox, ys)?)
        }
        ExperimentKind::ThetaLogistic => {
            let (ys, src) =
                theta_logistic_data(config.data_path.as_deref(), horizon, &config.theta, config.data_seed)?;
            data_source = Some(src);
            PreparedModel::ThetaLogistic(ThetaLogisticModel::with_ieks(
                config.theta,
                ys,
                config.ieks_iterations,
                config.inflation,
            )?)
        }
        ExperimentKind::ConstrainedRw => {
            PreparedModel::ConstrainedRw(ConstrainedRw::new(config.rw.sigma, horizon.expect("default horizon"))?)
        }
        ExperimentKind::LgssmCheck => {
            let exact = lgssm_model(&config.lgssm, horizon.expect("default horizon"), config.data_seed);
            PreparedModel::Lgssm { fk: LinearGaussianFk::with_smoothing_proposals(&exact, config.inflation)?, exact }
        }
    };
    let prepared = Prepared { config: config.clone(), horizon: 0, model, data_source, config_hash };
    let horizon = prepared.fk().horizon();
    Ok(Prepared { horizon, ..prepared })
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub block: BlockEstimate,
    pub levels: Option<usize>,
    pub weight_evals: u64,
    pub log_norm_const: Option<f64>,
}

/// Seed of the streams of `(method, replicate)`.
pub fn replicate_seed(seed: u64, method: Method, replicate: usize) -> u64 {
    StreamKey::new(seed, 0, replicate as u64, Role::Simulation).with_counter(method as u64 + 1).stream().next_u64()
}

impl Prepared {
    pub fn fk(&self) -> &dyn FeynmanKac {
        match &self.model {
            PreparedModel::Cox(m) => m,
            PreparedModel::ThetaLogistic(m) => m,
            PreparedModel::ConstrainedRw(m) => m,
            PreparedModel::Lgssm { fk, .. } => fk,
        }
    }

    /// The test functional of the experiment.
    pub fn functional(&self) -> Box<dyn Fn(&[f64]) -> f64 + Sync + Send> {
        match &self.model {
            PreparedModel::Cox(m) => Box::new(cox_score(&m.params)),
            PreparedModel::ConstrainedRw(m) => Box::new(rw_fisher_score(m.sigma)),
            PreparedModel::ThetaLogistic(_) | PreparedModel::Lgssm { .. } => Box::new(state_sum),
        }
    }

    /// Closed-form smoothing expectation of the functional, when one exists.
    pub fn reference(&self) -> Option<f64> {
        match &self.model {
            PreparedModel::Lgssm { exact, .. } => kalman_smoother(exact)
                .ok()
                .map(|s| s.marginals.iter().map(|m| m.mean[0]).sum()),
            _ => None,
        }
    }

    pub fn run_method(&self, method: Method, n_particles: usize, seed: u64) -> Result<MethodOutcome> {
        let model = self.fk();
        let resampler = self.config.resampler_for(method);
        Ok(match method {
            Method::Ffbs => {
                let proposal = match self.config.filter_proposal {
                    FilterProposalChoice::Bootstrap => FilterProposal::Bootstrap,
                    FilterProposalChoice::Independent => FilterProposal::Independent,
                };
                let filter = particle_filter(model, n_particles, resampler, proposal, seed)?;
                let log_norm_const = Some(filter.log_likelihood);
                let draws = ffbs_sample(&filter, model, n_particles, seed)?;
                MethodOutcome { block: draws.block, levels: None, weight_evals: draws.transition_evals, log_norm_const }
            }
            _ => {
                let run = run_dsmc(model, &SmootherConfig::new(n_particles, resampler, seed))?;
                MethodOutcome {
                    block: run.block,
                    levels: Some(run.info.levels),
                    weight_evals: run.info.weight_evals,
                    log_norm_const: run.info.log_norm_const,
                }
            }
        })
    }

    fn row(&self, method: Method, replicate: usize) -> ResultRow {
        let seed = replicate_seed(self.config.seed, method, replicate);
        let started = Instant::now();
        let result = self.run_method(method, self.config.n_particles, seed);
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        let mut row = ResultRow {
            experiment: self.config.experiment.name().into(),
            horizon: self.horizon,
            n_particles: self.config.n_particles,
            method: method.name().into(),
            replicate,
            estimate: None,
            wall_time_ms: self.config.timing.then_some(elapsed),
            levels: None,
            weight_evals: 0,
            log_norm_const: None,
            seed,
            config_hash: self.config_hash.clone(),
            error: None,
        };
        match result {
            Ok(out) => {
                row.estimate = Some(estimate(&out.block, self.functional()));
                row.levels = out.levels;
                row.weight_evals = out.weight_evals;
                row.log_norm_const = out.log_norm_const;
            }
            Err(e) => row.error = Some(format!("{e:#}")),
        }
        row
    }

    /// All methods × replicates, run concurrently, in a fixed order.
    pub fn run_rows(&self) -> Vec<ResultRow> {
        let jobs: Vec<(Method, usize)> = self
            .config
            .methods
            .iter()
            .flat_map(|m| (0..self.config.replicates).map(move |r| (*m, r)))
            .collect();
        jobs.into_par_iter().map(|(m, r)| self.row(m, r)).collect()
    }
}

/// Runs the experiment and writes the rows to the configured output, or
/// stdout when none is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let prepared = prepare(config)?;
    let rows = prepared.run_rows();
    match &config.out {
        Some(path) => write_rows(std::io::BufWriter::new(std::fs::File::create(path)?), &rows)?,
        None => write_rows(std::io::stdout().lock(), &rows)?,
    }
    Ok(rows)
}

/// Per-method summary over the replicates without errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub replicates: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub mean_wall_time_ms: Option<f64>,
    pub mean_weight_evals: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<MethodSummary> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.method == m && r.error.is_none()).collect();
            let est: Vec<f64> = ok.iter().filter_map(|r| r.estimate).collect();
            let times: Vec<f64> = ok.iter().filter_map(|r| r.wall_time_ms).collect();
            let evals: Vec<f64> = ok.iter().map(|r| r.weight_evals as f64).collect();
            MethodSummary {
                method: m.to_string(),
                replicates: ok.len(),
                mean: stats::mean(&est),
                std_dev: stats::std_dev(&est),
                mean_wall_time_ms: (!times.is_empty()).then(|| stats::mean(&times)),
                mean_weight_evals: stats::mean(&evals),
            }
        })
        .collect()
}

/// Per-time comparison of pooled dSMC means with the exact smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub exact_means: Vec<f64>,
    pub pooled_means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub max_abs_z: f64,
    pub exact_log_likelihood: f64,
}

/// Runs `dsmc` replicates of the LGSSM check and compares per-time means
/// with the Kalman/RTS smoother.
pub fn oracle_check(config: &ExperimentConfig) -> Result<OracleReport> {
    if config.experiment != ExperimentKind::LgssmCheck {
        bail!("check-oracle needs the lgssm-check experiment; {} has no closed-form smoother", config.experiment.name());
    }
    let prepared = prepare(config)?;
    let PreparedModel::Lgssm { exact, .. } = &prepared.model else { unreachable!() };
    let kalman = kalman_smoother(exact)?;
    let method = config.methods[0];
    let per_rep: Vec<Vec<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let out = prepared.run_method(method, config.n_particles, replicate_seed(config.seed, method, r))?;
            Ok(smoothed_means(&out.block))
        })
        .collect::<Result<_>>()?;
    let horizon = prepared.horizon;
    let mut report = OracleReport {
        exact_means: kalman.marginals.iter().map(|m| m.mean[0]).collect(),
        pooled_means: Vec::with_capacity(horizon + 1),
        standard_errors: Vec::with_capacity(horizon + 1),
        max_abs_z: 0.0,
        exact_log_likelihood: kalman.log_marginal_likelihood,
    };
    for t in 0..=horizon {
        let xs: Vec<f64> = per_rep.iter().map(|m| m[t]).collect();
        let m = stats::mean(&xs);
        let se = stats::std_dev(&xs) / (xs.len() as f64).sqrt();
        report.max_abs_z = report.max_abs_z.max((m - report.exact_means[t]).abs() / se);
        report.pooled_means.push(m);
        report.standard_errors.push(se);
    }
    Ok(report)
}

/// Weighted mean of the first state coordinate at every time of the block.
pub fn smoothed_means(block: &BlockEstimate) -> Vec<f64> {
    let d = block.state_dim;
    (block.start..=block.end)
        .map(|t| {
            let slice = block.time_slice(t);
            (0..block.n_particles).map(|n| block.log_weight(n).exp() * slice[n * d]).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            horizon: Some(7),
            n_particles: 16,
            replicates: 2,
            timing: false,
            methods: vec![Method::Dsmc, Method::Ffbs],
            ..ExperimentConfig::for_experiment(kind)
        }
    }

    #[test]
    fn every_experiment_runs() {
        for kind in [ExperimentKind::Cox, ExperimentKind::ThetaLogistic, ExperimentKind::ConstrainedRw, ExperimentKind::LgssmCheck] {
            let rows = prepare(&small(kind)).unwrap().run_rows();
            assert_eq!(rows.len(), 4);
            for r in &rows {
                assert!(r.error.is_none(), "{kind:?}: {:?}", r.error);
                assert!(r.estimate.unwrap().is_finite());
                assert_eq!(r.horizon, 7);
            }
            assert_eq!(rows[0].levels, Some(3));
            assert_eq!(rows[3].levels, None);
        }
    }

    #[test]
    fn lazy_methods_report_no_normalizing_constant() {
        let mut c = small(ExperimentKind::ConstrainedRw);
        c.methods = vec![Method::DsmcRs, Method::DsmcMh];
        for r in prepare(&c).unwrap().run_rows() {
            assert!(r.error.is_none());
            assert!(r.log_norm_const.is_none());
        }
    }

    #[test]
    fn replicate_seeds_are_distinct() {
        let a = replicate_seed(1, Method::Dsmc, 0);
        assert_ne!(a, replicate_seed(1, Method::Dsmc, 1));
        assert_ne!(a, replicate_seed(1, Method::Ffbs, 0));
        assert_ne!(a, replicate_seed(2, Method::Dsmc, 0));
    }

    #[test]
    fn data_do_not_depend_on_the_inference_seed() {
        let a = prepare(&small(ExperimentKind::Cox)).unwrap();
        let b = prepare(&ExperimentConfig { seed: 77, ..small(ExperimentKind::Cox) }).unwrap();
        let (PreparedModel::Cox(ma), PreparedModel::Cox(mb)) = (&a.model, &b.model) else { panic!() };
        assert_eq!(ma.ys, mb.ys);
    }

    #[test]
    fn failures_land_in_the_error_column() {
        // independent uniform leaves are never within reach of each other
        let c = ExperimentConfig {
            rw: crate::config::RwParams { sigma: 1e-300 },
            methods: vec![Method::Dsmc],
            ..small(ExperimentKind::ConstrainedRw)
        };
        let rows = prepare(&c).unwrap().run_rows();
        assert!(rows.iter().all(|r| r.error.is_some() && r.estimate.is_none()));
    }

    #[test]
    fn oracle_check_needs_the_linear_model() {
        assert!(oracle_check(&small(ExperimentKind::Cox)).is_err());
        let mut c = small(ExperimentKind::LgssmCheck);
        c.n_particles = 256;
        c.replicates = 8;
        let report = oracle_check(&c).unwrap();
        assert_eq!(report.pooled_means.len(), 8);
        assert!(report.max_abs_z < 5.0, "{report:?}");
    }
}

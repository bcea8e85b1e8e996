//! Experiment configuration, read from TOML and overridable from the
//! command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dsmc_core::Resampler;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::models::{CoxParams, ThetaLogisticParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Cox,
    ThetaLogistic,
    ConstrainedRw,
    LgssmCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Cox => "cox",
            ExperimentKind::ThetaLogistic => "theta-logistic",
            ExperimentKind::ConstrainedRw => "constrained-rw",
            ExperimentKind::LgssmCheck => "lgssm-check",
        }
    }

    /// `T` used when none is configured; theta-logistic follows its data.
    pub fn default_horizon(self) -> Option<usize> {
        match self {
            ExperimentKind::Cox => Some(32),
            ExperimentKind::ThetaLogistic => None,
            ExperimentKind::ConstrainedRw => Some(64),
            ExperimentKind::LgssmCheck => Some(31),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// dSMC with the configured dense resampler.
    Dsmc,
    /// dSMC with rejection-sampling lazy resampling.
    DsmcRs,
    /// dSMC with Metropolis-Hastings lazy resampling.
    DsmcMh,
    /// Particle filter followed by backward simulation.
    Ffbs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dsmc => "dsmc",
            Method::DsmcRs => "dsmc-rs",
            Method::DsmcMh => "dsmc-mh",
            Method::Ffbs => "ffbs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplerChoice {
    Multinomial,
    Systematic,
    MhLazy,
    RejectionLazy,
}

impl ResamplerChoice {
    pub fn resolve(self, mh_steps: usize) -> Resampler {
        match self {
            ResamplerChoice::Multinomial => Resampler::Multinomial,
            ResamplerChoice::Systematic => Resampler::Systematic,
            ResamplerChoice::MhLazy => Resampler::MhLazy { steps: mh_steps },
            ResamplerChoice::RejectionLazy => Resampler::RejectionLazy,
        }
    }

    /// The method a resampler choice stands for on the command line.
    pub fn method(self) -> Method {
        match self {
            ResamplerChoice::Multinomial | ResamplerChoice::Systematic => Method::Dsmc,
            ResamplerChoice::MhLazy => Method::DsmcMh,
            ResamplerChoice::RejectionLazy => Method::DsmcRs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterProposalChoice {
    Bootstrap,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwParams {
    pub sigma: f64,
}

impl Default for RwParams {
    fn default() -> Self {
        RwParams { sigma: 0.5 }
    }
}

/// Scalar `x_t = a x_{t-1} + N(0, q)`, `y_t = x_t + N(0, r)`, `x_0 ~ N(0, p0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LgssmParams {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub p0: f64,
}

impl Default for LgssmParams {
    fn default() -> Self {
        LgssmParams { a: 0.9, q: 0.5, r: 1.0, p0: 1.0 }
    }
}

/// Priors of the theta-logistic Gibbs kernel. Defaults reproduce the
/// reference setup for the nutria series: each `τ_i ~ N(0, 1)` truncated to
/// `[0, 3]`, precisions `~ Gamma(2, rate 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaPriors {
    pub tau_mean: f64,
    pub tau_sd: f64,
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub precision_shape: f64,
    pub precision_rate: f64,
}

impl Default for ThetaPriors {
    fn default() -> Self {
        ThetaPriors { tau_mean: 0.0, tau_sd: 1.0, tau_lower: 0.0, tau_upper: 3.0, precision_shape: 2.0, precision_rate: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSettings {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Every `thin`-th post-burn-in sweep is written.
    pub thin: usize,
    /// Write the star trajectory with each recorded sweep.
    pub record_star: bool,
    /// 0 disables the proposal cache; static proposals are then used.
    pub initial_ieks_iterations: usize,
    pub sweep_ieks_iterations: usize,
    /// Random-walk scales for `(τ_0, τ_1, τ_2)`.
    pub tau_step: [f64; 3],
    pub priors: ThetaPriors,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        GibbsSettings {
            sweeps: 2000,
            burn_in: 0,
            thin: 1,
            record_star: false,
            initial_ieks_iterations: 25,
            sweep_ieks_iterations: 1,
            tau_step: [0.05, 0.05, 0.2],
            priors: ThetaPriors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Final time index; `None` takes the experiment default.
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(rename = "N")]
    pub n_particles: usize,
    pub replicates: usize,
    pub methods: Vec<Method>,
    /// Dense resampler behind `dsmc` and `ffbs`.
    pub resampler: ResamplerChoice,
    pub mh_steps: usize,
    /// Inference seed; replicate streams derive from it.
    pub seed: u64,
    /// Seed of simulated data, separate so replicates share the data.
    pub data_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Record wall-clock times; off gives byte-reproducible CSV.
    pub timing: bool,
    /// Scale applied to proposal covariances built from Gaussian marginals.
    pub inflation: f64,
    pub ieks_iterations: usize,
    pub filter_proposal: FilterProposalChoice,
    /// Observation file for theta-logistic; the bundled nutria series when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    pub cox: CoxParams,
    pub theta: ThetaLogisticParams,
    pub rw: RwParams,
    pub lgssm: LgssmParams,
    pub gibbs: GibbsSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::LgssmCheck,
            horizon: None,
            n_particles: 256,
            replicates: 10,
            methods: vec![Method::Dsmc],
            resampler: ResamplerChoice::Multinomial,
            mh_steps: 10,
            seed: 1,
            data_seed: 20_240_601,
            out: None,
            timing: true,
            inflation: 1.0,
            ieks_iterations: 25,
            filter_proposal: FilterProposalChoice::Bootstrap,
            data_path: None,
            cox: CoxParams::default(),
            theta: ThetaLogisticParams::default(),
            rw: RwParams::default(),
            lgssm: LgssmParams::default(),
            gibbs: GibbsSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        ExperimentConfig { experiment, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("parsing experiment configuration")?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    pub fn dense_resampler(&self) -> Resampler {
        self.resampler.resolve(self.mh_steps)
    }

    pub fn resampler_for(&self, method: Method) -> Resampler {
        match method {
            Method::Dsmc | Method::Ffbs => self.dense_resampler(),
            Method::DsmcRs => Resampler::RejectionLazy,
            Method::DsmcMh => Resampler::MhLazy { steps: self.mh_steps },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == Some(0) {
            bail!("T must be positive");
        }
        if self.n_particles == 0 || self.replicates == 0 {
            bail!("N and replicates must be positive");
        }
        if self.methods.is_empty() {
            bail!("at least one method is required");
        }
        if !self.dense_resampler().is_dense() && self.methods.iter().any(|m| matches!(m, Method::Dsmc | Method::Ffbs)) {
            bail!("dsmc and ffbs need a dense resampler (multinomial or systematic), got {}", self.dense_resampler().name());
        }
        if self.methods.contains(&Method::DsmcMh) && self.mh_steps == 0 {
            bail!("mh-steps must be positive");
        }
        if !(self.inflation > 0.0) {
            bail!("proposal inflation must be positive");
        }
        self.cox.validate()?;
        self.theta.validate()?;
        if !(self.rw.sigma > 0.0) {
            bail!("random-walk sigma must be positive");
        }
        let l = &self.lgssm;
        if !(l.q > 0.0 && l.r > 0.0 && l.p0 > 0.0) {
            bail!("lgssm variances must be positive");
        }
        let g = &self.gibbs;
        if g.thin == 0 || g.sweeps == 0 {
            bail!("gibbs sweeps and thinning must be positive");
        }
        if !(g.priors.tau_lower < g.priors.tau_upper && g.priors.tau_sd > 0.0) {
            bail!("tau prior needs lower < upper and a positive scale");
        }
        if !(g.priors.precision_shape > 0.0 && g.priors.precision_rate > 0.0) {
            bail!("precision prior needs positive shape and rate");
        }
        if g.tau_step.iter().any(|s| !(*s >= 0.0)) {
            bail!("tau random-walk steps must be nonnegative");
        }
        Ok(())
    }
}

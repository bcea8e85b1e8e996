//! The three experiment models plus the linear-Gaussian check model.

use dsmc_core::density::MvNormal;
use dsmc_core::gaussian::{ieks, proposals_from_marginals, GaussianMarginal, NonlinearGaussianSsm};
use dsmc_core::math::{ln_gamma, normal_logpdf, LN_2PI};
use dsmc_core::{Error, FeynmanKac, Result, Stream};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

fn scalar_gaussian_row(mean: f64, sd: f64, xs: &[f64], out: &mut [f64]) {
    let log_norm = -0.5 * LN_2PI - sd.ln();
    let inv = 1.0 / sd;
    for (o, x) in out.iter_mut().zip(xs) {
        let z = (x - mean) * inv;
        *o = log_norm - 0.5 * z * z;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoxParams {
    pub mu: f64,
    pub rho: f64,
    pub sigma2: f64,
    /// Multiplies `x_{t-1}` inside the autoregression; 1 gives a plain AR(1).
    pub lambda: f64,
}

impl Default for CoxParams {
    fn default() -> Self {
        CoxParams { mu: 0.0, rho: 0.9, sigma2: 0.25, lambda: 1.0 }
    }
}

impl CoxParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) || !(self.sigma2 > 0.0) || !self.mu.is_finite() || !self.lambda.is_finite() {
            return Err(Error::Configuration(format!(
                "cox parameters need |rho| < 1 and sigma2 > 0, got rho={} sigma2={}",
                self.rho, self.sigma2
            )));
        }
        Ok(())
    }

    pub fn stationary_var(&self) -> f64 {
        self.sigma2 / (1.0 - self.rho * self.rho)
    }

    pub fn transition_mean(&self, x_prev: f64) -> f64 {
        self.mu + self.rho * (self.lambda * x_prev - self.mu)
    }
}

/// Poisson observations of a latent Gaussian autoregression, with the
/// stationary law as proposal and auxiliary measure at every time.
#[derive(Debug, Clone)]
pub struct CoxModel {
    pub params: CoxParams,
    pub ys: Vec<u64>,
    stationary: MvNormal,
    log_factorials: Vec<f64>,
}

impl CoxModel {
    pub fn new(params: CoxParams, ys: Vec<u64>) -> Result<Self> {
        params.validate()?;
        if ys.is_empty() {
            return Err(Error::InvalidInput("at least one observation is required".into()));
        }
        let stationary = MvNormal::scalar(params.mu, params.stationary_var())?;
        let log_factorials = ys.iter().map(|&y| ln_gamma(y as f64 + 1.0)).collect();
        Ok(CoxModel { params, ys, stationary, log_factorials })
    }

    /// Latent path and counts of length `horizon + 1`. Draws are interleaved
    /// in time, so a shorter horizon yields a prefix of a longer one.
    pub fn simulate(params: &CoxParams, horizon: usize, rng: &mut Stream) -> Result<(Vec<f64>, Vec<u64>)> {
        params.validate()?;
        let sd = params.sigma2.sqrt();
        let mut xs = Vec::with_capacity(horizon + 1);
        let mut ys = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let x = if t == 0 {
                params.mu + params.stationary_var().sqrt() * rng.normal()
            } else {
                params.transition_mean(xs[t - 1]) + sd * rng.normal()
            };
            let law = Poisson::new(x.exp()).map_err(|e| Error::Numerical(format!("Poisson rate e^{x}: {e}")))?;
            xs.push(x);
            ys.push(law.sample(rng) as u64);
        }
        Ok((xs, ys))
    }
}

impl FeynmanKac for CoxModel {
    fn state_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.ys.len() - 1
    }
    fn sample_initial(&self, rng: &mut Stream, out: &mut [f64]) {
        self.stationary.sample(rng, out)
    }
    fn log_initial_density(&self, x: &[f64]) -> f64 {
        self.stationary.logpdf(x)
    }
    fn sample_transition(&self, _t: usize, x_prev: &[f64], rng: &mut Stream, out: &mut [f64]) {
        out[0] = self.params.transition_mean(x_prev[0]) + self.params.sigma2.sqrt() * rng.normal();
    }
    fn log_transition_density(&self, _t: usize, x_prev: &[f64], x: &[f64]) -> f64 {
        normal_logpdf(x[0], self.params.transition_mean(x_prev[0]), self.params.sigma2)
    }
    fn log_potential(&self, t: usize, x: &[f64]) -> f64 {
        self.ys[t] as f64 * x[0] - x[0].exp() - self.log_factorials[t]
    }
    fn log_aux_density(&self, _t: usize, x: &[f64]) -> f64 {
        self.stationary.logpdf(x)
    }
    fn sample_proposal(&self, _t: usize, rng: &mut Stream, out: &mut [f64]) {
        self.stationary.sample(rng, out)
    }
    fn log_proposal_density(&self, _t: usize, x: &[f64]) -> f64 {
        self.stationary.logpdf(x)
    }
    fn log_transition_row(&self, _t: usize, x_prev: &[f64], xs: &[f64], out: &mut [f64]) {
        scalar_gaussian_row(self.params.transition_mean(x_prev[0]), self.params.sigma2.sqrt(), xs, out)
    }
    fn log_transition_sup(&self, _t: usize) -> Option<f64> {
        Some(-0.5 * (LN_2PI + self.params.sigma2.ln()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaLogisticParams {
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Transition noise standard deviation.
    pub q: f64,
    /// Observation noise standard deviation.
    pub r: f64,
}

impl Default for ThetaLogisticParams {
    fn default() -> Self {
        // point estimates reported for the nutria series
        ThetaLogisticParams { tau0: 0.15, tau1: 0.12, tau2: 0.1, q: 0.47, r: 0.39 }
    }
}

impl ThetaLogisticParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau0, self.tau1, self.tau2].iter().all(|v| v.is_finite());
        if !finite || !(self.q > 0.0) || !(self.r > 0.0) {
            return Err(Error::Configuration(format!(
                "theta-logistic parameters need finite taus and q, r > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn drift(&self, x: f64) -> f64 {
        x + self.tau0 - self.tau1 * (self.tau2 * x).exp()
    }

    pub fn drift_derivative(&self, x: f64) -> f64 {
        1.0 - self.tau1 * self.tau2 * (self.tau2 * x).exp()
    }
}

/// The additive-noise form used for linearization.
#[derive(Debug, Clone)]
pub struct ThetaLogisticSsm {
    pub params: ThetaLogisticParams,
    pub ys: Vec<f64>,
}

impl NonlinearGaussianSsm for ThetaLogisticSsm {
    fn state_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.ys.len() - 1
    }
    fn initial_mean(&self) -> DVector<f64> {
        DVector::from_element(1, 0.0)
    }
    fn initial_cov(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
    fn transition_fn(&self, _t: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.params.drift(x[0]))
    }
    fn transition_cov(&self, _t: usize) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params.q * self.params.q)
    }
    fn observation_fn(&self, _t: usize, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn observation_cov(&self, _t: usize) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params.r * self.params.r)
    }
    fn observation(&self, t: usize) -> DVector<f64> {
        DVector::from_element(1, self.ys[t])
    }
    fn transition_jacobian(&self, _t: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.params.drift_derivative(x[0])))
    }
    fn observation_jacobian(&self, _t: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 1.0))
    }
}

/// Theta-logistic model with per-time Gaussian proposals `q_t = ν_t`.
#[derive(Debug, Clone)]
pub struct ThetaLogisticModel {
    pub ssm: ThetaLogisticSsm,
    proposals: Vec<MvNormal>,
    initial: MvNormal,
}

impl ThetaLogisticModel {
    /// Proposals from `marginals`, covariances scaled by `inflation`.
    pub fn with_marginals(
        params: ThetaLogisticParams,
        ys: Vec<f64>,
        marginals: &[GaussianMarginal],
        inflation: f64,
    ) -> Result<Self> {
        params.validate()?;
        if ys.is_empty() || marginals.len() != ys.len() {
            return Err(Error::InvalidInput("one marginal per observation is required".into()));
        }
        Ok(ThetaLogisticModel {
            ssm: ThetaLogisticSsm { params, ys },
            proposals: proposals_from_marginals(marginals, inflation)?,
            initial: MvNormal::scalar(0.0, 1.0)?,
        })
    }

    /// Proposals from a cold IEKS run with `iterations` steps.
    pub fn with_ieks(params: ThetaLogisticParams, ys: Vec<f64>, iterations: usize, inflation: f64) -> Result<Self> {
        params.validate()?;
        let ssm = ThetaLogisticSsm { params, ys };
        let marginals = ieks(&ssm, iterations, None)?;
        Self::with_marginals(params, ssm.ys, &marginals, inflation)
    }

    /// Data-centred proposals `N(y_t, q² + r²)` that need no smoother.
    pub fn static_marginals(params: &ThetaLogisticParams, ys: &[f64]) -> Vec<GaussianMarginal> {
        ys.iter().map(|&y| GaussianMarginal::scalar(y, params.q * params.q + params.r * params.r)).collect()
    }

    pub fn params(&self) -> &ThetaLogisticParams {
        &self.ssm.params
    }

    /// Simulated latent path and observations of length `horizon + 1`,
    /// interleaved in time like [`CoxModel::simulate`].
    pub fn simulate(params: &ThetaLogisticParams, horizon: usize, rng: &mut Stream) -> Result<(Vec<f64>, Vec<f64>)> {
        params.validate()?;
        let mut xs = Vec::with_capacity(horizon + 1);
        let mut ys = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let x = if t == 0 { rng.normal() } else { params.drift(xs[t - 1]) + params.q * rng.normal() };
            xs.push(x);
            ys.push(x + params.r * rng.normal());
        }
        Ok((xs, ys))
    }
}

impl FeynmanKac for ThetaLogisticModel {
    fn state_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.ssm.ys.len() - 1
    }
    fn sample_initial(&self, rng: &mut Stream, out: &mut [f64]) {
        self.initial.sample(rng, out)
    }
    fn log_initial_density(&self, x: &[f64]) -> f64 {
        self.initial.logpdf(x)
    }
    fn sample_transition(&self, _t: usize, x_prev: &[f64], rng: &mut Stream, out: &mut [f64]) {
        out[0] = self.ssm.params.drift(x_prev[0]) + self.ssm.params.q * rng.normal();
    }
    fn log_transition_density(&self, _t: usize, x_prev: &[f64], x: &[f64]) -> f64 {
        let q = self.ssm.params.q;
        normal_logpdf(x[0], self.ssm.params.drift(x_prev[0]), q * q)
    }
    fn log_potential(&self, t: usize, x: &[f64]) -> f64 {
        let r = self.ssm.params.r;
        normal_logpdf(self.ssm.ys[t], x[0], r * r)
    }
    fn log_aux_density(&self, t: usize, x: &[f64]) -> f64 {
        self.proposals[t].logpdf(x)
    }
    fn sample_proposal(&self, t: usize, rng: &mut Stream, out: &mut [f64]) {
        self.proposals[t].sample(rng, out)
    }
    fn log_proposal_density(&self, t: usize, x: &[f64]) -> f64 {
        self.proposals[t].logpdf(x)
    }
    fn log_transition_row(&self, _t: usize, x_prev: &[f64], xs: &[f64], out: &mut [f64]) {
        scalar_gaussian_row(self.ssm.params.drift(x_prev[0]), self.ssm.params.q, xs, out)
    }
    fn log_transition_sup(&self, _t: usize) -> Option<f64> {
        Some(-0.5 * LN_2PI - self.ssm.params.q.ln())
    }
}

/// Gaussian random walk conditioned to stay in `[-1, 1]`, with uniform
/// proposals and auxiliary measures on the box.
#[derive(Debug, Clone)]
pub struct ConstrainedRw {
    pub sigma: f64,
    pub horizon: usize,
    initial: MvNormal,
}

impl ConstrainedRw {
    pub fn new(sigma: f64, horizon: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Configuration(format!("random-walk scale must be positive, got {sigma}")));
        }
        Ok(ConstrainedRw { sigma, horizon, initial: MvNormal::scalar(0.0, 1.0)? })
    }

    /// `log(2 · (2πσ²)^{-1/2})`, the supremum of the stitching weight.
    pub fn log_weight_bound(&self) -> f64 {
        std::f64::consts::LN_2 - 0.5 * (LN_2PI + 2.0 * self.sigma.ln())
    }
}

fn in_box(x: f64) -> bool {
    (-1.0..=1.0).contains(&x)
}

impl FeynmanKac for ConstrainedRw {
    fn state_dim(&self) -> usize {
        1
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
    fn sample_transition(&self, _t: usize, x_prev: &[f64], rng: &mut Stream, out: &mut [f64]) {
        out[0] = x_prev[0] + self.sigma * rng.normal();
    }
    fn log_transition_density(&self, _t: usize, x_prev: &[f64], x: &[f64]) -> f64 {
        normal_logpdf(x[0], x_prev[0], self.sigma * self.sigma)
    }
    fn log_potential(&self, _t: usize, x: &[f64]) -> f64 {
        if in_box(x[0]) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
    fn log_aux_density(&self, _t: usize, x: &[f64]) -> f64 {
        if in_box(x[0]) {
            -std::f64::consts::LN_2
        } else {
            f64::NEG_INFINITY
        }
    }
    fn sample_proposal(&self, _t: usize, rng: &mut Stream, out: &mut [f64]) {
        out[0] = 2.0 * rng.uniform() - 1.0;
    }
    fn log_proposal_density(&self, t: usize, x: &[f64]) -> f64 {
        self.log_aux_density(t, x)
    }
    fn log_stitch_bound(&self, _t: usize) -> Option<f64> {
        Some(self.log_weight_bound())
    }
    fn log_transition_sup(&self, _t: usize) -> Option<f64> {
        Some(-0.5 * LN_2PI - self.sigma.ln())
    }
    fn log_transition_row(&self, _t: usize, x_prev: &[f64], xs: &[f64], out: &mut [f64]) {
        scalar_gaussian_row(x_prev[0], self.sigma, xs, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsmc_core::model::{log_init_weight, log_stitch_weight};
    use dsmc_core::{Role, StreamKey};

    #[test]
    fn cox_potential_is_the_poisson_log_mass() {
        let m = CoxModel::new(CoxParams::default(), vec![3, 0]).unwrap();
        let x = 0.4f64;
        let expected = 3.0 * x - x.exp() - 6f64.ln();
        assert!((m.log_potential(0, &[x]) - expected).abs() < 1e-12);
        // zero counts: e^{-e^x}, finite for every x
        for x in [-30.0, 0.0, 5.0] {
            assert!(m.log_potential(1, &[x]).is_finite());
        }
    }

    #[test]
    fn cox_without_memory_has_separable_stitch_weights() {
        let p = CoxParams { rho: 0.0, ..CoxParams::default() };
        let m = CoxModel::new(p, vec![1, 2]).unwrap();
        let a = log_stitch_weight(&m, 1, &[-0.7], &[0.3]).unwrap();
        let b = log_stitch_weight(&m, 1, &[1.9], &[0.3]).unwrap();
        assert!((a - b).abs() < 1e-12);
        // ν is the stationary law, which equals the transition here
        assert!((a - m.log_potential(1, &[0.3])).abs() < 1e-12);
    }

    #[test]
    fn simulated_data_are_nested_in_the_horizon() {
        let p = CoxParams::default();
        let key = StreamKey::new(3, 0, 0, Role::Simulation);
        let (xs, ys) = CoxModel::simulate(&p, 40, &mut key.stream()).unwrap();
        let (xs_short, ys_short) = CoxModel::simulate(&p, 10, &mut key.stream()).unwrap();
        assert_eq!(&xs[..11], &xs_short[..]);
        assert_eq!(&ys[..11], &ys_short[..]);
        let tp = ThetaLogisticParams::default();
        let (_, a) = ThetaLogisticModel::simulate(&tp, 30, &mut key.stream()).unwrap();
        let (_, b) = ThetaLogisticModel::simulate(&tp, 5, &mut key.stream()).unwrap();
        assert_eq!(&a[..6], &b[..]);
    }

    #[test]
    fn cox_rejects_explosive_parameters() {
        assert!(CoxModel::new(CoxParams { rho: 1.0, ..CoxParams::default() }, vec![0]).is_err());
        assert!(CoxModel::new(CoxParams { sigma2: 0.0, ..CoxParams::default() }, vec![0]).is_err());
    }

    #[test]
    fn cox_batched_row_matches_pointwise() {
        let m = CoxModel::new(CoxParams::default(), vec![1; 3]).unwrap();
        let xs = [0.1, -0.5, 1.2];
        let mut row = [0.0; 3];
        m.log_transition_row(1, &[0.3], &xs, &mut row);
        for (r, x) in row.iter().zip(xs) {
            assert!((r - m.log_transition_density(1, &[0.3], &[x])).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_logistic_jacobian_matches_finite_differences() {
        let p = ThetaLogisticParams { tau0: 0.3, tau1: 0.2, tau2: 0.7, q: 0.4, r: 0.3 };
        for x in [-1.0, 0.0, 2.5] {
            let h = 1e-6 * (1.0 + f64::abs(x));
            let fd = (p.drift(x + h) - p.drift(x - h)) / (2.0 * h);
            assert!((fd - p.drift_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn theta_logistic_without_exponent_is_a_constant_shift() {
        let p = ThetaLogisticParams { tau2: 0.0, ..ThetaLogisticParams::default() };
        assert!((p.drift(1.3) - (1.3 + p.tau0 - p.tau1)).abs() < 1e-15);
        assert_eq!(p.drift_derivative(-4.0), 1.0);
    }

    #[test]
    fn ieks_proposals_give_finite_weights() {
        let mut rng = StreamKey::new(1, 0, 0, Role::Simulation).stream();
        let p = ThetaLogisticParams::default();
        let (_, ys) = ThetaLogisticModel::simulate(&p, 30, &mut rng).unwrap();
        let m = ThetaLogisticModel::with_ieks(p, ys, 25, 1.0).unwrap();
        for t in 0..=30 {
            assert!(log_init_weight(&m, t, &[0.5]).unwrap().is_finite());
        }
    }

    #[test]
    fn random_walk_bound_is_attained_on_the_diagonal() {
        let m = ConstrainedRw::new(0.5, 3).unwrap();
        let w = log_stitch_weight(&m, 1, &[0.2], &[0.2]).unwrap();
        assert!((w - m.log_weight_bound()).abs() < 1e-12);
        let expected = (2.0 / (2.0 * std::f64::consts::PI * 0.25).sqrt()).ln();
        assert!((m.log_weight_bound() - expected).abs() < 1e-12);
        assert_eq!(log_stitch_weight(&m, 1, &[0.2], &[1.2]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn random_walk_proposals_stay_in_the_box() {
        let m = ConstrainedRw::new(0.5, 3).unwrap();
        let mut rng = StreamKey::new(2, 0, 0, Role::LeafProposal).stream();
        let xs = m.sample_proposals(2, 10_000, &mut rng);
        assert!(xs.iter().all(|x| in_box(*x)));
        assert!(xs.iter().all(|x| m.log_potential(2, &[*x]) == 0.0));
    }

    #[test]
    fn wide_random_walk_has_nearly_flat_weights() {
        let m = ConstrainedRw::new(1e4, 1).unwrap();
        let a = log_stitch_weight(&m, 1, &[-1.0], &[1.0]).unwrap();
        assert!((a - m.log_weight_bound()).abs() < 1e-7);
    }
}

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{kalman_smoother, AffineGaussian, GaussianMarginal, LinearGaussianModel};
use crate::error::{Error, Result};

/// State-space model with additive Gaussian noise:
/// `x_0 ~ N(m_0, P_0)`, `x_t = f_t(x_{t-1}) + N(0, Q_t)`, `y_t = g_t(x_t) + N(0, R_t)`.
///
/// Jacobians default to central finite differences.
pub trait NonlinearGaussianSsm: Sync {
    fn state_dim(&self) -> usize;

    fn horizon(&self) -> usize;

    fn initial_mean(&self) -> DVector<f64>;

    fn initial_cov(&self) -> DMatrix<f64>;

    /// `f_t(x_{t-1})` for `t >= 1`.
    fn transition_fn(&self, t: usize, x: &DVector<f64>) -> DVector<f64>;

    fn transition_cov(&self, t: usize) -> DMatrix<f64>;

    /// `g_t(x_t)`.
    fn observation_fn(&self, t: usize, x: &DVector<f64>) -> DVector<f64>;

    fn observation_cov(&self, t: usize) -> DMatrix<f64>;

    /// `y_t`.
    fn observation(&self, t: usize) -> DVector<f64>;

    fn transition_jacobian(&self, _t: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn observation_jacobian(&self, _t: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

impl NonlinearGaussianSsm for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        LinearGaussianModel::state_dim(self)
    }

    fn horizon(&self) -> usize {
        LinearGaussianModel::horizon(self)
    }

    fn initial_mean(&self) -> DVector<f64> {
        self.initial_mean.clone()
    }

    fn initial_cov(&self) -> DMatrix<f64> {
        self.initial_cov.clone()
    }

    fn transition_fn(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let tr = &self.transitions[t - 1];
        &tr.matrix * x + &tr.offset
    }

    fn transition_cov(&self, t: usize) -> DMatrix<f64> {
        self.transitions[t - 1].cov.clone()
    }

    fn observation_fn(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let ob = &self.observations[t];
        &ob.matrix * x + &ob.offset
    }

    fn observation_cov(&self, t: usize) -> DMatrix<f64> {
        self.observations[t].cov.clone()
    }

    fn observation(&self, t: usize) -> DVector<f64> {
        self.ys[t].clone()
    }

    fn transition_jacobian(&self, t: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.transitions[t - 1].matrix.clone())
    }

    fn observation_jacobian(&self, t: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.observations[t].matrix.clone())
    }
}

/// Central differences with per-coordinate step `1e-6 · (1 + |x_k|)`.
pub fn finite_difference_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for k in 0..x.len() {
        let h = 1e-6 * (1.0 + x[k].abs());
        xp[k] = x[k] + h;
        let up = f(&xp);
        xp[k] = x[k] - h;
        let down = f(&xp);
        xp[k] = x[k];
        jac.set_column(k, &((up - down) / (2.0 * h)));
    }
    jac
}

fn affine_at<F>(
    t: usize,
    f: F,
    analytic: Option<DMatrix<f64>>,
    x: &DVector<f64>,
    cov: DMatrix<f64>,
) -> Result<AffineGaussian>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let value = f(x);
    let jac = analytic.unwrap_or_else(|| finite_difference_jacobian(&f, x));
    if jac.iter().chain(value.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Linearization { t });
    }
    let offset = &value - &jac * x;
    Ok(AffineGaussian::new(jac, offset, cov))
}

/// First-order Taylor expansion of the model around `reference` (one state
/// per time `0..=T`). Transition `t` is expanded at `reference[t-1]`,
/// observation `t` at `reference[t]`.
pub fn linearize<S: NonlinearGaussianSsm + ?Sized>(
    ssm: &S,
    reference: &[DVector<f64>],
) -> Result<LinearGaussianModel> {
    let horizon = ssm.horizon();
    if reference.len() != horizon + 1 {
        return Err(Error::InvalidInput(alloc::format!(
            "reference has {} states, expected {}",
            reference.len(),
            horizon + 1
        )));
    }
    let mut transitions = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let x = &reference[t - 1];
        transitions.push(affine_at(
            t,
            |z| ssm.transition_fn(t, z),
            ssm.transition_jacobian(t, x),
            x,
            ssm.transition_cov(t),
        )?);
    }
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut ys = Vec::with_capacity(horizon + 1);
    for (t, x) in reference.iter().enumerate() {
        observations.push(affine_at(
            t,
            |z| ssm.observation_fn(t, z),
            ssm.observation_jacobian(t, x),
            x,
            ssm.observation_cov(t),
        )?);
        ys.push(ssm.observation(t));
    }
    Ok(LinearGaussianModel {
        initial_mean: ssm.initial_mean(),
        initial_cov: ssm.initial_cov(),
        transitions,
        observations,
        ys,
    })
}

fn open_loop_means<S: NonlinearGaussianSsm + ?Sized>(ssm: &S) -> Vec<DVector<f64>> {
    let mut means = Vec::with_capacity(ssm.horizon() + 1);
    means.push(ssm.initial_mean());
    for t in 1..=ssm.horizon() {
        let next = ssm.transition_fn(t, &means[t - 1]);
        means.push(next);
    }
    means
}

/// Iterated extended Kalman smoother. Starts from `initial` means when
/// given, otherwise from the noise-free propagation of the initial mean.
pub fn ieks<S: NonlinearGaussianSsm + ?Sized>(
    ssm: &S,
    n_iterations: usize,
    initial: Option<&[GaussianMarginal]>,
) -> Result<Vec<GaussianMarginal>> {
    ieks_trace(ssm, n_iterations, initial).map(|(m, _)| m)
}

/// As [`ieks`], also returning the max-abs change of the smoothed means at
/// each iteration.
pub fn ieks_trace<S: NonlinearGaussianSsm + ?Sized>(
    ssm: &S,
    n_iterations: usize,
    initial: Option<&[GaussianMarginal]>,
) -> Result<(Vec<GaussianMarginal>, Vec<f64>)> {
    if n_iterations == 0 {
        return Err(Error::Configuration("IEKS needs at least one iteration".into()));
    }
    let mut means: Vec<DVector<f64>> = match initial {
        Some(m) => {
            if m.len() != ssm.horizon() + 1 {
                return Err(Error::InvalidInput("initial marginals do not cover 0..=T".into()));
            }
            m.iter().map(|g| g.mean.clone()).collect()
        }
        None => open_loop_means(ssm),
    };
    let mut marginals = Vec::new();
    let mut changes = Vec::with_capacity(n_iterations);
    for iteration in 0..n_iterations {
        let lin = linearize(ssm, &means).map_err(|e| match e {
            Error::Linearization { .. } => Error::Divergence { iteration },
            other => other,
        })?;
        marginals = kalman_smoother(&lin).map_err(|_| Error::Divergence { iteration })?.marginals;
        let mut change = 0.0f64;
        for (old, new) in means.iter_mut().zip(&marginals) {
            if new.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { iteration });
            }
            change = change.max((&new.mean - &*old).amax());
            old.copy_from(&new.mean);
        }
        changes.push(change);
    }
    Ok((marginals, changes))
}

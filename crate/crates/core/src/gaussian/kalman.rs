use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{symmetrize, GaussianMarginal, LinearGaussianModel};
use crate::density::MvNormal;
use crate::error::{Error, Result};
use crate::math::{ln, LN_2PI};
use crate::rng::Stream;

/// Predicted and filtered moments at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub predicted: GaussianMarginal,
    pub filtered: GaussianMarginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanSmoothing {
    pub marginals: Vec<GaussianMarginal>,
    /// Exact `ln p(y_{0:T})`.
    pub log_marginal_likelihood: f64,
}

/// Symmetric positive definite inverse-apply: returns `A⁻¹ B`.
fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular covariance in Kalman recursion".into()))
}

fn log_det_spd(a: &DMatrix<f64>) -> Result<f64> {
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    Ok(2.0 * ch.l().diagonal().iter().map(|v| ln(*v)).sum::<f64>())
}

fn check_finite(m: &GaussianMarginal) -> Result<()> {
    if m.mean.iter().chain(m.cov.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite moments in Kalman recursion".into()))
    }
}

/// Forward Kalman filter with Joseph-form covariance updates. Returns the
/// per-step moments and the exact log marginal likelihood.
pub fn kalman_filter(model: &LinearGaussianModel) -> Result<(Vec<FilterStep>, f64)> {
    let d = model.state_dim();
    let horizon = model.horizon();
    if model.transitions.len() != horizon || model.observations.len() != horizon + 1 {
        return Err(Error::InvalidInput("model step counts do not match the observations".into()));
    }
    let eye = DMatrix::<f64>::identity(d, d);
    let mut steps: Vec<FilterStep> = Vec::with_capacity(horizon + 1);
    let mut loglik = 0.0;
    let mut pred = GaussianMarginal::new(model.initial_mean.clone(), model.initial_cov.clone());
    for t in 0..=horizon {
        if t > 0 {
            let tr = &model.transitions[t - 1];
            let prev = &steps[t - 1].filtered;
            let mean = &tr.matrix * &prev.mean + &tr.offset;
            let cov = symmetrize(&(&tr.matrix * &prev.cov * tr.matrix.transpose() + &tr.cov));
            pred = GaussianMarginal::new(mean, cov);
        }
        let obs = &model.observations[t];
        let y = &model.ys[t];
        let h = &obs.matrix;
        let innovation: DVector<f64> = y - (h * &pred.mean + &obs.offset);
        let s = symmetrize(&(h * &pred.cov * h.transpose() + &obs.cov));
        // K = P⁻ Hᵀ S⁻¹ = (S⁻¹ H P⁻)ᵀ
        let gain = spd_solve(&s, &(h * &pred.cov))?.transpose();
        let s_inv_v = spd_solve(&s, &DMatrix::from_column_slice(innovation.len(), 1, innovation.as_slice()))?;
        let quad = innovation.dot(&s_inv_v.column(0));
        loglik += -0.5 * (innovation.len() as f64 * LN_2PI + log_det_spd(&s)? + quad);
        let mean = &pred.mean + &gain * &innovation;
        let a = &eye - &gain * h;
        let cov = symmetrize(&(&a * &pred.cov * a.transpose() + &gain * &obs.cov * gain.transpose()));
        let filtered = GaussianMarginal::new(mean, cov);
        check_finite(&filtered)?;
        steps.push(FilterStep { predicted: pred.clone(), filtered });
    }
    Ok((steps, loglik))
}

/// Exact smoothing marginals (forward filter + RTS backward pass) and the
/// exact log marginal likelihood. Returned covariances are symmetric and
/// carry a `1e-9 · trace / d` diagonal jitter.
pub fn kalman_smoother(model: &LinearGaussianModel) -> Result<KalmanSmoothing> {
    let (steps, loglik) = kalman_filter(model)?;
    let horizon = model.horizon();
    let mut smoothed: Vec<GaussianMarginal> = steps.iter().map(|s| s.filtered.clone()).collect();
    for t in (0..horizon).rev() {
        let f = &model.transitions[t].matrix;
        let filt = &steps[t].filtered;
        let pred_next = &steps[t + 1].predicted;
        // G = P_f Fᵀ (P⁻_{t+1})⁻¹ = ((P⁻_{t+1})⁻¹ F P_f)ᵀ
        let gain = spd_solve(&pred_next.cov, &(f * &filt.cov))?.transpose();
        let next = &smoothed[t + 1];
        let mean = &filt.mean + &gain * (&next.mean - &pred_next.mean);
        let cov = symmetrize(&(&filt.cov + &gain * (&next.cov - &pred_next.cov) * gain.transpose()));
        smoothed[t] = GaussianMarginal::new(mean, cov);
        check_finite(&smoothed[t])?;
    }
    for m in smoothed.iter_mut() {
        let d = m.cov.nrows();
        let jitter = 1e-9 * m.cov.trace() / d as f64;
        if jitter > 0.0 {
            for i in 0..d {
                m.cov[(i, i)] += jitter;
            }
        }
    }
    Ok(KalmanSmoothing { marginals: smoothed, log_marginal_likelihood: loglik })
}

/// Draws one trajectory `x_{0:T}` (time-major) from the exact posterior by
/// backward simulation through the filter.
pub fn sample_posterior_trajectory(model: &LinearGaussianModel, rng: &mut Stream) -> Result<Vec<f64>> {
    let (steps, _) = kalman_filter(model)?;
    let d = model.state_dim();
    let horizon = model.horizon();
    let mut out = alloc::vec![0.0; (horizon + 1) * d];
    let draw = |m: &GaussianMarginal, rng: &mut Stream, dst: &mut [f64]| -> Result<()> {
        let cov: Vec<f64> = (0..d * d).map(|k| m.cov[(k / d, k % d)]).collect();
        let law = MvNormal::new(m.mean.iter().copied().collect(), &cov)?;
        law.sample(rng, dst);
        Ok(())
    };
    draw(&steps[horizon].filtered, rng, &mut out[horizon * d..])?;
    for t in (0..horizon).rev() {
        let f = &model.transitions[t].matrix;
        let filt = &steps[t].filtered;
        let pred = &steps[t + 1].predicted;
        let gain = spd_solve(&pred.cov, &(f * &filt.cov))?.transpose();
        let next = DVector::from_column_slice(&out[(t + 1) * d..(t + 2) * d]);
        let mean = &filt.mean + &gain * (next - &pred.mean);
        let cov = symmetrize(&(&filt.cov - &gain * &pred.cov * gain.transpose()));
        draw(&GaussianMarginal::new(mean, cov), rng, &mut out[t * d..(t + 1) * d])?;
    }
    Ok(out)
}

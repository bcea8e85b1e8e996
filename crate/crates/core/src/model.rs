//! Feynman-Kac model abstraction and the two weight functions the smoother
//! needs: leaf (initialization) weights and stitching weights.
//!
//! Densities are with respect to Lebesgue measure on `R^d`. Potentials may
//! capture observations; the smoother never sees data directly. All
//! evaluators must be pure and callable from many threads at once.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// A Feynman-Kac model on `R^d` over time indices `0..=T`.
///
/// Besides the model proper (initial law, Markov kernels and potentials)
/// an implementation carries the auxiliary measures `ν_t` that define the
/// partial smoothing blocks and the independent proposals `q_t` used to
/// draw leaf particles. For `t >= 1`, `ν_t` must dominate every transition
/// law `P_t(· | x_{t-1})`.
pub trait FeynmanKac: Sync {
    fn state_dim(&self) -> usize;

    /// `T`, the last time index.
    fn horizon(&self) -> usize;

    fn sample_initial(&self, rng: &mut Stream, out: &mut [f64]);

    fn log_initial_density(&self, x: &[f64]) -> f64;

    /// Draws `x_t ~ P_t(· | x_prev)`, for `t >= 1`.
    fn sample_transition(&self, t: usize, x_prev: &[f64], rng: &mut Stream, out: &mut [f64]);

    fn log_transition_density(&self, t: usize, x_prev: &[f64], x: &[f64]) -> f64;

    /// `log h_t(x)`; may be `-inf`.
    fn log_potential(&self, t: usize, x: &[f64]) -> f64;

    /// Log density of the auxiliary measure `ν_t`.
    fn log_aux_density(&self, t: usize, x: &[f64]) -> f64;

    fn sample_proposal(&self, t: usize, rng: &mut Stream, out: &mut [f64]);

    fn log_proposal_density(&self, t: usize, x: &[f64]) -> f64;

    /// Upper bound on `log ω_t(x_prev, x)` over all pairs, when one is known.
    /// Required by the rejection-based lazy resampler.
    fn log_stitch_bound(&self, _t: usize) -> Option<f64> {
        None
    }

    /// `sup log p_t(x | x_prev)` over both arguments, when finite. Gives the
    /// rejection resampler a separable envelope of the stitching weights.
    fn log_transition_sup(&self, _t: usize) -> Option<f64> {
        None
    }

    /// `count` proposal draws at time `t`, row-major `count × d`.
    fn sample_proposals(&self, t: usize, count: usize, rng: &mut Stream) -> Vec<f64> {
        let d = self.state_dim();
        let mut out = vec![0.0; count * d];
        for x in out.chunks_exact_mut(d) {
            self.sample_proposal(t, rng, x);
        }
        out
    }

    /// `out[j] = log p_t(xs[j] | x_prev)` for a row-major batch `xs`.
    /// Override for models where a batched loop is much cheaper.
    fn log_transition_row(&self, t: usize, x_prev: &[f64], xs: &[f64], out: &mut [f64]) {
        let d = self.state_dim();
        for (o, x) in out.iter_mut().zip(xs.chunks_exact(d)) {
            *o = self.log_transition_density(t, x_prev, x);
        }
    }

    /// `out[i] = log p_t(x | xs_prev[i])` for a row-major batch `xs_prev`.
    fn log_transition_col(&self, t: usize, xs_prev: &[f64], x: &[f64], out: &mut [f64]) {
        let d = self.state_dim();
        for (o, xp) in out.iter_mut().zip(xs_prev.chunks_exact(d)) {
            *o = self.log_transition_density(t, xp, x);
        }
    }
}

fn check_state<M: FeynmanKac + ?Sized>(model: &M, x: &[f64]) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::InvalidInput(alloc::format!(
            "state has {} coordinates, model dimension is {}",
            x.len(),
            model.state_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite state coordinate".into()));
    }
    Ok(())
}

/// `log h_c(x) - log ν_c(x)`: the part of the stitching weight that depends
/// on `x_c` only. `-inf` when the potential vanishes.
pub fn log_target_ratio<M: FeynmanKac + ?Sized>(model: &M, c: usize, x: &[f64]) -> Result<f64> {
    let lh = model.log_potential(c, x);
    if lh == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let la = model.log_aux_density(c, x);
    if la == f64::NEG_INFINITY {
        return Err(Error::DominationViolation { t: c });
    }
    let r = lh - la;
    if r.is_nan() || r == f64::INFINITY {
        return Err(Error::Numerical(alloc::format!("stitch ratio {r} at t={c}")));
    }
    Ok(r)
}

/// `log ω_c(x_prev, x_cur) = log p_c(x_cur | x_prev) + log h_c(x_cur) - log ν_c(x_cur)`.
pub fn log_stitch_weight<M: FeynmanKac + ?Sized>(
    model: &M,
    c: usize,
    x_prev: &[f64],
    x_cur: &[f64],
) -> Result<f64> {
    if c == 0 || c > model.horizon() {
        return Err(Error::InvalidInput(alloc::format!(
            "stitch index {c} outside 1..={}",
            model.horizon()
        )));
    }
    check_state(model, x_prev)?;
    check_state(model, x_cur)?;
    let lt = model.log_transition_density(c, x_prev, x_cur);
    let lh = model.log_potential(c, x_cur);
    if lt == f64::NEG_INFINITY || lh == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let la = model.log_aux_density(c, x_cur);
    if la == f64::NEG_INFINITY {
        return Err(Error::DominationViolation { t: c });
    }
    let w = lt + lh - la;
    if w.is_nan() || w == f64::INFINITY {
        return Err(Error::Numerical(alloc::format!("stitch weight {w} at t={c}")));
    }
    Ok(w)
}

/// Leaf weight of a proposal draw `x` at time `t`.
///
/// At `t = 0` this is `log h_0(x) + log dP_0(x) - log dq_0(x)`, which makes
/// `ν_0 ∝ h_0 P_0`; for `t >= 1` it is `log dν_t(x) - log dq_t(x)`.
pub fn log_init_weight<M: FeynmanKac + ?Sized>(model: &M, t: usize, x: &[f64]) -> Result<f64> {
    if t > model.horizon() {
        return Err(Error::InvalidInput(alloc::format!("time {t} beyond horizon {}", model.horizon())));
    }
    check_state(model, x)?;
    let numerator = if t == 0 {
        let lh = model.log_potential(0, x);
        if lh == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        lh + model.log_initial_density(x)
    } else {
        model.log_aux_density(t, x)
    };
    if numerator == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let lq = model.log_proposal_density(t, x);
    if lq == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(alloc::format!("proposal density vanishes at t={t}")));
    }
    let w = numerator - lq;
    if w.is_nan() || w == f64::INFINITY {
        return Err(Error::Numerical(alloc::format!("leaf weight {w} at t={t}")));
    }
    Ok(w)
}

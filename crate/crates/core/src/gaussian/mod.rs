//! Linear-Gaussian machinery: the exact Kalman filter / RTS smoother, Taylor
//! linearization of additive-noise nonlinear models, the iterated extended
//! Kalman smoother, and a Feynman-Kac adapter that uses Gaussian marginals
//! as proposals `q_t` and auxiliary measures `ν_t`.

mod fk;
mod kalman;
mod linearize;

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

pub use fk::{proposals_from_marginals, LinearGaussianFk};
pub use kalman::{kalman_filter, kalman_smoother, sample_posterior_trajectory, FilterStep, KalmanSmoothing};
pub use linearize::{finite_difference_jacobian, ieks, ieks_trace, linearize, NonlinearGaussianSsm};

/// Affine Gaussian map `z = A x + offset + N(0, cov)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineGaussian {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl AffineGaussian {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>, cov: DMatrix<f64>) -> Self {
        AffineGaussian { matrix, offset, cov }
    }

    pub fn scalar(a: f64, b: f64, var: f64) -> Self {
        AffineGaussian {
            matrix: DMatrix::from_element(1, 1, a),
            offset: DVector::from_element(1, b),
            cov: DMatrix::from_element(1, 1, var),
        }
    }
}

/// `x_0 ~ N(m_0, P_0)`, `x_t = F_t x_{t-1} + b_t + N(0, Q_t)`,
/// `y_t = H_t x_t + c_t + N(0, R_t)` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearGaussianModel {
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    /// `transitions[t - 1]` maps `x_{t-1}` to `x_t`; length `T`.
    pub transitions: Vec<AffineGaussian>,
    /// Length `T + 1`.
    pub observations: Vec<AffineGaussian>,
    /// Length `T + 1`.
    pub ys: Vec<DVector<f64>>,
}

impl LinearGaussianModel {
    pub fn time_invariant(
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
        transition: AffineGaussian,
        observation: AffineGaussian,
        ys: Vec<DVector<f64>>,
    ) -> Self {
        let horizon = ys.len().saturating_sub(1);
        LinearGaussianModel {
            initial_mean,
            initial_cov,
            transitions: alloc::vec![transition; horizon],
            observations: alloc::vec![observation; horizon + 1],
            ys,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.initial_mean.len()
    }

    pub fn horizon(&self) -> usize {
        self.ys.len() - 1
    }
}

/// Per-time Gaussian marginal `N(m_t, P_t)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianMarginal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMarginal {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianMarginal { mean, cov }
    }

    pub fn scalar(mean: f64, var: f64) -> Self {
        GaussianMarginal { mean: DVector::from_element(1, mean), cov: DMatrix::from_element(1, 1, var) }
    }
}

/// `(P + Pᵀ) / 2`.
pub(crate) fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

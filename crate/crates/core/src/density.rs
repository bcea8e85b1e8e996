//! Multivariate normal evaluator for hot loops: Cholesky factor stored flat,
//! no allocation per evaluation for dimensions up to 8.

use alloc::vec::Vec;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::math::{ln, sqrt, LN_2PI};
use crate::rng::Stream;

type Scratch = SmallVec<[f64; 8]>;

/// Lower Cholesky factor of a symmetric positive definite row-major matrix.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvNormal {
    dim: usize,
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

impl MvNormal {
    pub fn new(mean: Vec<f64>, cov: &[f64]) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::InvalidInput("covariance shape does not match mean".into()));
        }
        let chol = cholesky(cov, d)
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let log_det: f64 = (0..d).map(|i| 2.0 * ln(chol[i * d + i])).sum();
        Ok(MvNormal { dim: d, mean, chol, log_norm: -0.5 * (d as f64 * LN_2PI + log_det) })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(alloc::vec![mean], &[var])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Lower Cholesky factor, row-major.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    /// Log density at the mean, its supremum.
    pub fn log_peak_density(&self) -> f64 {
        self.log_norm
    }

    /// Log density at `x`.
    #[inline]
    pub fn logpdf(&self, x: &[f64]) -> f64 {
        self.logpdf_centered(x, &self.mean)
    }

    /// Log density of `N(center, Σ)` at `x`, reusing this covariance.
    #[inline]
    pub fn logpdf_centered(&self, x: &[f64], center: &[f64]) -> f64 {
        let d = self.dim;
        if d == 1 {
            let z = (x[0] - center[0]) / self.chol[0];
            return self.log_norm - 0.5 * z * z;
        }
        let mut z: Scratch = SmallVec::from_elem(0.0, d);
        let mut q = 0.0;
        for i in 0..d {
            let mut s = x[i] - center[i];
            for k in 0..i {
                s -= self.chol[i * d + k] * z[k];
            }
            z[i] = s / self.chol[i * d + i];
            q += z[i] * z[i];
        }
        self.log_norm - 0.5 * q
    }

    pub fn sample(&self, rng: &mut Stream, out: &mut [f64]) {
        self.sample_centered(&self.mean, rng, out)
    }

    /// Draws from `N(center, Σ)`.
    pub fn sample_centered(&self, center: &[f64], rng: &mut Stream, out: &mut [f64]) {
        let d = self.dim;
        let e: Scratch = (0..d).map(|_| rng.normal()).collect();
        for i in 0..d {
            let mut s = center[i];
            for k in 0..=i {
                s += self.chol[i * d + k] * e[k];
            }
            out[i] = s;
        }
    }
}

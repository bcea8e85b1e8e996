#![allow(dead_code)]

use dsmc_core::gaussian::{AffineGaussian, LinearGaussianModel};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Scalar AR(1) observed in Gaussian noise, deterministic observations.
pub fn scalar_lgssm(horizon: usize, a: f64, q: f64, r: f64) -> LinearGaussianModel {
    let ys = (0..=horizon)
        .map(|t| DVector::from_element(1, 0.8 * (t as f64 * 0.45).sin() + 0.3 * (t as f64 * 1.7).cos()))
        .collect();
    LinearGaussianModel::time_invariant(
        DVector::from_element(1, 0.0),
        DMatrix::from_element(1, 1, 1.0),
        AffineGaussian::scalar(a, 0.0, q),
        AffineGaussian::scalar(1.0, 0.0, r),
        ys,
    )
}

/// Upper-tail p-value of Pearson's statistic for `observed` against
/// expected probabilities `probs` (cells with zero probability must be empty).
pub fn chi_square_p(observed: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(probs) {
        if p == 0.0 {
            assert_eq!(o, 0, "draw in a zero-probability cell");
            continue;
        }
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let dist = ChiSquared::new((cells - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Asymptotic one-sample Kolmogorov-Smirnov p-value.
pub fn ks_p<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d)
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

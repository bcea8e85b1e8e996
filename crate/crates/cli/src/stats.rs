//! Summary statistics over replicates and Markov chains.

use anyhow::{bail, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Root mean squared deviation from `reference`.
pub fn rmse(xs: &[f64], reference: f64) -> f64 {
    (xs.iter().map(|x| (x - reference).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Autocorrelation for lags `0..=max_lag`, normalized by `n` at every lag.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 || max_lag >= n {
        bail!("autocorrelation needs more than max_lag = {max_lag} points, got {n}");
    }
    let m = mean(series);
    let c0: f64 = series.iter().map(|x| (x - m).powi(2)).sum();
    if !(c0 > 0.0) {
        bail!("autocorrelation of a constant series is undefined");
    }
    Ok((0..=max_lag)
        .map(|k| series[..n - k].iter().zip(&series[k..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / c0)
        .collect())
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsmc_core::{Role, StreamKey};

    #[test]
    fn white_noise_acf_stays_in_the_band() {
        let mut s = StreamKey::new(5, 0, 0, Role::Simulation).stream();
        let xs: Vec<f64> = (0..4000).map(|_| s.normal()).collect();
        let r = acf(&xs, 20).unwrap();
        assert_eq!(r[0], 1.0);
        let band = 3.0 / (xs.len() as f64).sqrt();
        assert!(r[1..].iter().all(|v| v.abs() < band), "{r:?}");
    }

    #[test]
    fn ar1_acf_decays_geometrically() {
        let mut s = StreamKey::new(6, 0, 0, Role::Simulation).stream();
        let rho: f64 = 0.9;
        let mut x = 0.0;
        let mut xs = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            x = rho * x + (1.0 - rho * rho).sqrt() * s.normal();
            xs.push(x);
        }
        let r = acf(&xs, 5).unwrap();
        // Bartlett variance of an AR(1) sample autocorrelation at lag k is at
        // most (1 + ρ²)/(1 - ρ²)/n
        let band = 3.0 * ((1.0 + rho * rho) / (1.0 - rho * rho) / xs.len() as f64).sqrt();
        for (k, v) in r.iter().enumerate() {
            assert!((v - rho.powi(k as i32)).abs() < band, "lag {k}: {v}");
        }
    }

    #[test]
    fn constant_series_is_rejected() {
        assert!(acf(&[2.0; 10], 3).is_err());
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-14 && (c - 3.0).abs() < 1e-14);
    }

    #[test]
    fn variance_and_rmse() {
        let xs = [1.0, 2.0, 3.0];
        assert_eq!(variance(&xs), 1.0);
        assert!((rmse(&xs, 2.0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}

//! Additive trajectory functionals estimated by the experiments. Each takes
//! a scalar-state trajectory `x_{0:T}`.

use crate::models::CoxParams;

/// Fisher score of `σ²` in the Cox model:
/// `-(T+1)/(2σ²) + (1-ρ²)/(2σ⁴)·(x_0-μ)² + 1/(2σ⁴)·Σ_s (x_s - μ - ρ(x_{s-1}-μ))²`.
pub fn cox_score(params: &CoxParams) -> impl Fn(&[f64]) -> f64 + Sync + Send + Copy {
    let CoxParams { mu, rho, sigma2, .. } = *params;
    move |x: &[f64]| {
        let s4 = sigma2 * sigma2;
        let mut acc = -(x.len() as f64) / (2.0 * sigma2) + (1.0 - rho * rho) / (2.0 * s4) * (x[0] - mu).powi(2);
        for w in x.windows(2) {
            let e = w[1] - mu - rho * (w[0] - mu);
            acc += e * e / (2.0 * s4);
        }
        acc
    }
}

/// `log σ + σ^{-3} Σ_t (x_t - x_{t-1})²`.
pub fn rw_fisher_score(sigma: f64) -> impl Fn(&[f64]) -> f64 + Sync + Send + Copy {
    move |x: &[f64]| {
        let ss: f64 = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        sigma.ln() + ss / sigma.powi(3)
    }
}

/// `Σ_t x_t`, whose smoothing expectation is the sum of the smoothed means.
pub fn state_sum(x: &[f64]) -> f64 {
    x.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cox_score_at_the_mean_is_the_constant_term() {
        let p = CoxParams { mu: 0.3, rho: 0.0, sigma2: 0.8, lambda: 1.0 };
        let x = [0.3; 6];
        assert!((cox_score(&p)(&x) + 6.0 / 1.6).abs() < 1e-14);
    }

    #[test]
    fn cox_score_hand_instance() {
        let p = CoxParams { mu: 0.0, rho: 0.5, sigma2: 1.0, lambda: 1.0 };
        // -1 + 0.375·1 + 0.5·1.5²
        let direct = -1.0 + 0.375 + 0.5 * 2.25;
        assert!((cox_score(&p)(&[1.0, 2.0]) - direct).abs() < 1e-14);
        assert!((direct - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rw_score_constant_path_and_hand_instance() {
        assert!((rw_fisher_score(0.5)(&[0.2; 5]) - 0.5f64.ln()).abs() < 1e-15);
        assert!((rw_fisher_score(1.0)(&[0.0, 0.5]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rw_score_quadratic_part_is_additive_over_time() {
        let f = rw_fisher_score(0.7);
        let x = [0.1, -0.4, 0.3, 0.9];
        let c = 0.7f64.ln();
        let split = (f(&x[..3]) - c) + (f(&x[2..]) - c);
        assert!((f(&x) - c - split).abs() < 1e-13);
    }
}

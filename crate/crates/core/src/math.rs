//! Scalar math that works with and without `std`, plus log-domain reductions.

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.exp()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::exp(x)
    }
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.ln()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log(x)
    }
}

#[inline(always)]
pub fn ln_1p(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.ln_1p()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log1p(x)
    }
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.sqrt()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::sqrt(x)
    }
}

/// `ln Γ(x)` for `x > 0`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Log density of `N(mean, var)` at `x`.
#[inline(always)]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + ln(var) + d * d / var)
}

/// Log probability mass of `Poisson(rate = exp(log_rate))` at `k`.
#[inline]
pub fn poisson_logpmf(k: u64, log_rate: f64) -> f64 {
    let kf = k as f64;
    kf * log_rate - exp(log_rate) - ln_gamma(kf + 1.0)
}

/// Sum with a fixed pairwise reduction tree. The result depends only on the
/// input order, never on how the work is scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Maximum of a slice, `-inf` when empty. NaN entries are ignored.
pub fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `ln Σ exp(x_i)`, `-inf` when every entry is `-inf` or the slice is empty.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = max(xs);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    const LEAF: usize = 64;
    fn shifted(xs: &[f64], m: f64) -> f64 {
        if xs.len() <= LEAF {
            let mut acc = 0.0;
            for &x in xs {
                acc += exp(x - m);
            }
            return acc;
        }
        let mid = xs.len() / 2;
        shifted(&xs[..mid], m) + shifted(&xs[mid..], m)
    }
    m + ln(shifted(xs, m))
}

/// Two-term log-sum-exp.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + ln_1p(exp(b - a))
    } else {
        b + ln_1p(exp(a - b))
    }
}

/// Normalizes log weights in place so that they log-sum-exp to zero and
/// returns the log of their sum before normalization.
pub fn normalize_log_weights(log_w: &mut [f64]) -> f64 {
    let total = log_sum_exp(log_w);
    if total.is_finite() {
        for w in log_w.iter_mut() {
            *w -= total;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct_sum() {
        let xs = [0.5, 2.0, -1.0, 3.5];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn lse_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[f64::NEG_INFINITY, 0.0]);
        assert!((v - 0.0).abs() < 1e-15);
    }

    #[test]
    fn lse_is_shift_stable() {
        let xs = [1000.0, 1000.0];
        assert!((log_sum_exp(&xs) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(-1000.0, -1000.0) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_long_input() {
        let xs: alloc::vec::Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 49_995_000.0);
    }

    #[test]
    fn poisson_matches_direct_pmf() {
        // rate e^1, k = 3: e^{-e} e^{3} / 6
        let direct = (-(1f64.exp()) + 3.0 - 6f64.ln()).exp();
        assert!((poisson_logpmf(3, 1.0).exp() - direct).abs() < 1e-14);
    }
}

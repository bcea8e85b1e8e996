//! Brute-force references for scalar models: a discretized HMM on a uniform
//! midpoint grid with matrix forward-backward, plus goodness-of-fit helpers.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub struct Grid {
    pub points: Vec<f64>,
    pub dx: f64,
}

impl Grid {
    /// `n` cell midpoints covering `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        let dx = (hi - lo) / n as f64;
        Grid { points: (0..n).map(|k| lo + (k as f64 + 0.5) * dx).collect(), dx }
    }
}

/// Scalar state-space model given by plain log-density closures.
pub struct ScalarHmm<'a> {
    pub horizon: usize,
    pub log_initial: &'a dyn Fn(f64) -> f64,
    pub log_transition: &'a dyn Fn(f64, f64) -> f64,
    pub log_potential: &'a dyn Fn(usize, f64) -> f64,
}

pub struct GridPosterior {
    pub points: Vec<f64>,
    /// `marginals[t][k]`: posterior mass of cell `k` at time `t`.
    pub marginals: Vec<Vec<f64>>,
    /// `pairs[t - 1][i * n + j]`: joint mass of `(x_{t-1}, x_t)` in cells `(i, j)`.
    pub pairs: Vec<Vec<f64>>,
    pub log_evidence: f64,
}

fn exp_normalized(log_v: &[f64]) -> (Vec<f64>, f64) {
    let m = log_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = log_v.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = v.iter().sum();
    (v.iter().map(|x| x / s).collect(), m + s.ln())
}

/// Scaled forward-backward over the grid.
pub fn grid_smooth(model: &ScalarHmm, grid: &Grid) -> GridPosterior {
    let n = grid.points.len();
    let xs = &grid.points;
    let ln_dx = grid.dx.ln();
    // kernel[i * n + j] = p(x_j | x_i) dx
    let mut kernel_log = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            kernel_log[i * n + j] = (model.log_transition)(xs[i], xs[j]) + ln_dx;
        }
    }
    let kernel: Vec<f64> = kernel_log.iter().map(|l| l.exp()).collect();
    let pot: Vec<Vec<f64>> = (0..=model.horizon).map(|t| xs.iter().map(|x| (model.log_potential)(t, *x)).collect()).collect();
    let shift: Vec<f64> = pot.iter().map(|p| p.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let h: Vec<Vec<f64>> = pot.iter().zip(&shift).map(|(p, s)| p.iter().map(|l| (l - s).exp()).collect()).collect();

    let init: Vec<f64> = xs.iter().enumerate().map(|(k, x)| (model.log_initial)(*x) + ln_dx + pot[0][k]).collect();
    let (a0, mut log_evidence) = exp_normalized(&init);
    let mut alpha = vec![a0];
    let mut scale = vec![1.0];
    for t in 1..=model.horizon {
        let prev = &alpha[t - 1];
        let mut next = vec![0.0; n];
        for i in 0..n {
            let w = prev[i];
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += w * kernel[i * n + j];
            }
        }
        for j in 0..n {
            next[j] *= h[t][j];
        }
        let c: f64 = next.iter().sum();
        log_evidence += c.ln() + shift[t];
        next.iter_mut().for_each(|v| *v /= c);
        alpha.push(next);
        scale.push(c);
    }
    let mut beta = vec![vec![1.0; n]; model.horizon + 1];
    for t in (0..model.horizon).rev() {
        let mut b = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += kernel[i * n + j] * h[t + 1][j] * beta[t + 1][j];
            }
            b[i] = acc / scale[t + 1];
        }
        beta[t] = b;
    }
    let marginals: Vec<Vec<f64>> = (0..=model.horizon)
        .map(|t| {
            let g: Vec<f64> = alpha[t].iter().zip(&beta[t]).map(|(a, b)| a * b).collect();
            let s: f64 = g.iter().sum();
            g.iter().map(|v| v / s).collect()
        })
        .collect();
    let pairs = (1..=model.horizon)
        .map(|t| {
            let mut p = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] = alpha[t - 1][i] * kernel[i * n + j] * h[t][j] * beta[t][j] / scale[t];
                }
            }
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            p
        })
        .collect();
    GridPosterior { points: xs.clone(), marginals, pairs, log_evidence }
}

impl GridPosterior {
    pub fn mean(&self, t: usize, f: impl Fn(f64) -> f64) -> f64 {
        self.marginals[t].iter().zip(&self.points).map(|(w, x)| w * f(*x)).sum()
    }

    /// `E[f0(x_0) + Σ_t g(x_{t-1}, x_t)]`.
    pub fn additive(&self, f0: impl Fn(f64) -> f64, g: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.points.len();
        let xs = &self.points;
        let mut total = self.mean(0, f0);
        for p in &self.pairs {
            for i in 0..n {
                for j in 0..n {
                    total += p[i * n + j] * g(xs[i], xs[j]);
                }
            }
        }
        total
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Kolmogorov distribution survival function `P(K > x)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS p-value of `sample` against the continuous `cdf`
/// (asymptotic with the small-sample correction of Stephens).
pub fn ks_p(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| p[*a].partial_cmp(&p[*b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let k = order[rank];
        running = running.min(p[k] * m as f64 / (rank + 1) as f64);
        adjusted[k] = running;
    }
    adjusted
}

/// Pearson chi-square p-value of `counts` against `probs`.
pub fn chi_square_p(counts: &[f64], probs: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    let stat: f64 = counts.iter().zip(probs).map(|(c, p)| (c - total * p).powi(2) / (total * p)).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

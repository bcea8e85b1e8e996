mod common;

use common::chi_square_p;
use dsmc_core::resampling::{multinomial_pairs, rejection_lazy_pairs, systematic_pairs, MatrixWeights};
use dsmc_core::{PairSample, Resampler, Role, StreamKey};

fn key(seed: u64) -> StreamKey {
    StreamKey::new(seed, 3, 1, Role::PairResample)
}

/// `W^{ij} ∝ (i + 1)(j + 1)` on a 4 × 4 grid.
fn product_matrix() -> (MatrixWeights, Vec<f64>) {
    let n = 4;
    let w: Vec<f64> = (0..n * n).map(|k| (((k / n) + 1) * ((k % n) + 1)) as f64).collect();
    let total: f64 = w.iter().sum();
    let probs = w.iter().map(|x| x / total).collect();
    (MatrixWeights::new(n, w.iter().map(|x| x.ln()).collect()), probs)
}

/// A lopsided matrix, slow to explore with uniform proposals.
fn skewed_matrix() -> (MatrixWeights, Vec<f64>) {
    let log_w: Vec<f64> = (0..16).map(|k| -0.45 * (k as f64) + if k % 5 == 0 { 1.5 } else { 0.0 }).collect();
    let mx = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|l| (l - mx).exp()).sum();
    let probs = log_w.iter().map(|l| (l - mx).exp() / total).collect();
    (MatrixWeights::new(4, log_w), probs)
}

fn counts(s: &PairSample, n: usize) -> Vec<u64> {
    let mut c = vec![0u64; n * n];
    for (l, r) in s.left.iter().zip(&s.right) {
        c[l * n + r] += 1;
    }
    c
}

fn total_variation(c: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = c.iter().sum();
    0.5 * c.iter().zip(probs).map(|(&o, &p)| (o as f64 / total as f64 - p).abs()).sum::<f64>()
}

#[test]
fn multinomial_uniform_two_by_two() {
    let src = MatrixWeights::new(2, vec![-3.0; 4]);
    let s = multinomial_pairs(&src, 100_000, key(1)).unwrap();
    assert!(chi_square_p(&counts(&s, 2), &[0.25; 4]) > 0.001);
}

#[test]
fn multinomial_product_weights() {
    let (src, probs) = product_matrix();
    let s = multinomial_pairs(&src, 100_000, key(2)).unwrap();
    assert!(chi_square_p(&counts(&s, 4), &probs) > 0.001);
    // Σ_ij (i + 1)(j + 1) = 10²
    assert!((s.log_mean_weight.unwrap() - 100f64.ln()).abs() < 1e-12);
}

#[test]
fn rejection_matches_exact_law() {
    for (src, probs) in [product_matrix(), skewed_matrix()] {
        let src = src.with_exact_bound();
        let s = rejection_lazy_pairs(&src, 100_000, key(3)).unwrap();
        let p = chi_square_p(&counts(&s, 4), &probs);
        assert!(p > 0.001, "p = {p}");
        assert!(!s.biased);
    }
}

#[test]
fn multinomial_and_rejection_agree() {
    let (src, _) = skewed_matrix();
    let src = src.with_exact_bound();
    let a = counts(&multinomial_pairs(&src, 50_000, key(4)).unwrap(), 4);
    let b = counts(&rejection_lazy_pairs(&src, 50_000, key(5)).unwrap(), 4);
    // two-sample chi-square on a 2 × 16 contingency table
    let mut stat = 0.0;
    let mut cells = 0;
    for k in 0..16 {
        let row = (a[k] + b[k]) as f64;
        if row == 0.0 {
            continue;
        }
        cells += 1;
        for o in [a[k], b[k]] {
            let e = row / 2.0;
            stat += (o as f64 - e).powi(2) / e;
        }
    }
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn systematic_counts_are_unbiased() {
    let (src, probs) = skewed_matrix();
    let n_out = 16;
    let reps = 10_000;
    let mut sum = vec![0.0; 16];
    let mut sum_sq = vec![0.0; 16];
    for r in 0..reps {
        let c = counts(&systematic_pairs(&src, n_out, key(10 + r)).unwrap(), 4);
        for k in 0..16 {
            sum[k] += c[k] as f64;
            sum_sq[k] += (c[k] * c[k]) as f64;
        }
    }
    for k in 0..16 {
        let mean = sum[k] / reps as f64;
        let var = sum_sq[k] / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt().max(1e-3);
        assert!((mean - n_out as f64 * probs[k]).abs() < 3.5 * se, "cell {k}: {mean}");
    }
}

#[test]
fn metropolis_bias_shrinks_with_more_steps() {
    let (src, probs) = skewed_matrix();
    let tv: Vec<f64> = [1usize, 10, 100]
        .iter()
        .map(|&b| {
            let s = Resampler::MhLazy { steps: b }.sample(&src, 100_000, key(6)).unwrap();
            assert!(s.evaluations <= 100_000 * (b as u64 + 1));
            total_variation(&counts(&s, 4), &probs)
        })
        .collect();
    assert!(tv[0] > tv[1] && tv[1] > tv[2], "{tv:?}");
}

#[test]
fn flat_weights_are_accepted_immediately() {
    let src = MatrixWeights::new(8, vec![0.25; 64]).with_exact_bound();
    let s = rejection_lazy_pairs(&src, 500, key(7)).unwrap();
    assert_eq!(s.evaluations, 500);
    let m = Resampler::MhLazy { steps: 4 }.sample(&src, 500, key(8)).unwrap();
    assert_eq!(m.evaluations, 500 * 5);
}

#[test]
fn shifting_all_weights_keeps_the_law() {
    let (src, probs) = product_matrix();
    let shifted = MatrixWeights::new(4, src.log_weights.iter().map(|w| w + 750.0).collect());
    let s = multinomial_pairs(&shifted, 100_000, key(9)).unwrap();
    assert!(chi_square_p(&counts(&s, 4), &probs) > 0.001);
    let r = rejection_lazy_pairs(&shifted.with_exact_bound(), 20_000, key(9)).unwrap();
    assert!(chi_square_p(&counts(&r, 4), &probs) > 0.001);
}

//! Model-level checks against the grid-HMM and Kalman references.

mod common;

use common::{grid_smooth, mean_se, normal_logpdf, Grid, ScalarHmm};
use dsmc_cli::config::LgssmParams;
use dsmc_cli::experiment::{lgssm_model, smoothed_means};
use dsmc_cli::functionals::{cox_score, rw_fisher_score};
use dsmc_cli::models::{ConstrainedRw, CoxModel, CoxParams, ThetaLogisticModel, ThetaLogisticParams};
use dsmc_core::baselines::{ffbs_sample, particle_filter, FilterProposal};
use dsmc_core::gaussian::kalman_smoother;
use dsmc_core::smoother::{estimate, run_dsmc};
use dsmc_core::{Resampler, Role, SmootherConfig, StreamKey};
use statrs::distribution::{Discrete, Poisson};

fn cox_instance(horizon: usize, data_seed: u64) -> CoxModel {
    let p = CoxParams::default();
    let mut rng = StreamKey::new(data_seed, 0, 0, Role::Simulation).stream();
    let (_, ys) = CoxModel::simulate(&p, horizon, &mut rng).unwrap();
    CoxModel::new(p, ys).unwrap()
}

fn cox_grid(model: &CoxModel, n: usize) -> common::GridPosterior {
    let p = model.params;
    let stat_var = p.sigma2 / (1.0 - p.rho * p.rho);
    let init = move |x: f64| normal_logpdf(x, p.mu, stat_var);
    let trans = move |xp: f64, x: f64| normal_logpdf(x, p.mu + p.rho * (xp - p.mu), p.sigma2);
    let ys = model.ys.clone();
    let pot = move |t: usize, x: f64| Poisson::new(x.exp()).unwrap().ln_pmf(ys[t]);
    let sd = stat_var.sqrt();
    let hmm = ScalarHmm { horizon: model.ys.len() - 1, log_initial: &init, log_transition: &trans, log_potential: &pot };
    grid_smooth(&hmm, &Grid::uniform(p.mu - 8.0 * sd, p.mu + 8.0 * sd, n))
}

fn cox_score_on_grid(post: &common::GridPosterior, p: &CoxParams, horizon: usize) -> f64 {
    let s2 = p.sigma2;
    let s4 = s2 * s2;
    post.additive(
        |x0| -((horizon + 1) as f64) / (2.0 * s2) + (1.0 - p.rho * p.rho) / (2.0 * s4) * (x0 - p.mu).powi(2),
        |xp, x| (x - p.mu - p.rho * (xp - p.mu)).powi(2) / (2.0 * s4),
    )
}

#[test]
fn grid_reference_reproduces_the_kalman_smoother() {
    let params = LgssmParams::default();
    let exact = lgssm_model(&params, 6, 3);
    let k = kalman_smoother(&exact).unwrap();
    let ys: Vec<f64> = exact.ys.iter().map(|y| y[0]).collect();
    let init = |x: f64| normal_logpdf(x, 0.0, params.p0);
    let trans = |xp: f64, x: f64| normal_logpdf(x, params.a * xp, params.q);
    let pot = |t: usize, x: f64| normal_logpdf(ys[t], x, params.r);
    let hmm = ScalarHmm { horizon: 6, log_initial: &init, log_transition: &trans, log_potential: &pot };
    let post = grid_smooth(&hmm, &Grid::uniform(-8.0, 8.0, 800));
    for t in 0..=6 {
        assert!((post.mean(t, |x| x) - k.marginals[t].mean[0]).abs() < 1e-6, "t={t}");
        let var = post.mean(t, |x| x * x) - post.mean(t, |x| x).powi(2);
        assert!((var - k.marginals[t].cov[(0, 0)]).abs() < 1e-6, "t={t}");
    }
    assert!((post.log_evidence - k.log_marginal_likelihood).abs() < 1e-6);
}

#[test]
fn cox_grid_reference_is_resolution_stable() {
    let m = cox_instance(32, 11);
    let coarse = cox_score_on_grid(&cox_grid(&m, 400), &m.params, 32);
    let fine = cox_score_on_grid(&cox_grid(&m, 1200), &m.params, 32);
    assert!((coarse - fine).abs() < 1e-6 * (1.0 + fine.abs()), "{coarse} vs {fine}");
}

#[test]
fn cox_smoothed_means_track_the_grid_reference() {
    let m = cox_instance(5, 7);
    let post = cox_grid(&m, 400);
    let reps: Vec<Vec<f64>> = (0..16)
        .map(|r| {
            let run = run_dsmc(&m, &SmootherConfig::new(1024, Resampler::Multinomial, 100 + r)).unwrap();
            smoothed_means(&run.block)
        })
        .collect();
    for t in 0..=5 {
        let xs: Vec<f64> = reps.iter().map(|v| v[t]).collect();
        let (mean, se) = mean_se(&xs);
        let exact = post.mean(t, |x| x);
        assert!((mean - exact).abs() < 3.0 * se, "t={t}: {mean} vs {exact} (se {se})");
    }
    // the normalizing constant as well
    let logl: Vec<f64> = (0..16)
        .map(|r| run_dsmc(&m, &SmootherConfig::new(1024, Resampler::Multinomial, 200 + r)).unwrap().info.log_norm_const.unwrap())
        .collect();
    let ratio: Vec<f64> = logl.iter().map(|l| (l - post.log_evidence).exp()).collect();
    let (mean, se) = mean_se(&ratio);
    assert!((mean - 1.0).abs() < 3.0 * se.max(1e-3), "{mean} ± {se}");
}

#[test]
fn cox_score_estimates_agree_across_methods() {
    let m = cox_instance(8, 21);
    let exact = cox_score_on_grid(&cox_grid(&m, 400), &m.params, 8);
    let phi = cox_score(&m.params);
    let dsmc: Vec<f64> = (0..20)
        .map(|r| estimate(&run_dsmc(&m, &SmootherConfig::new(512, Resampler::Multinomial, r)).unwrap().block, phi))
        .collect();
    let ffbs: Vec<f64> = (0..20)
        .map(|r| {
            let f = particle_filter(&m, 512, Resampler::Multinomial, FilterProposal::Bootstrap, 50 + r).unwrap();
            estimate(&ffbs_sample(&f, &m, 512, 50 + r).unwrap().block, phi)
        })
        .collect();
    for (name, xs) in [("dsmc", dsmc), ("ffbs", ffbs)] {
        let (mean, se) = mean_se(&xs);
        assert!((mean - exact).abs() < 3.0 * se, "{name}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn constrained_walk_matches_the_grid_reference() {
    let sigma = 0.5;
    let m = ConstrainedRw::new(sigma, 2).unwrap();
    let init = |x: f64| normal_logpdf(x, 0.0, 1.0);
    let trans = |xp: f64, x: f64| normal_logpdf(x, xp, sigma * sigma);
    let pot = |_: usize, x: f64| if x.abs() <= 1.0 { 0.0 } else { f64::NEG_INFINITY };
    let hmm = ScalarHmm { horizon: 2, log_initial: &init, log_transition: &trans, log_potential: &pot };
    let post = grid_smooth(&hmm, &Grid::uniform(-1.0, 1.0, 400));
    let exact_mean = post.mean(1, |x| x);
    let exact_sq = post.mean(1, |x| x * x);
    let exact_score = post.additive(|_| sigma.ln(), |xp, x| (x - xp).powi(2) / sigma.powi(3));
    let phi = rw_fisher_score(sigma);
    for resampler in [Resampler::Multinomial, Resampler::RejectionLazy] {
        let mut means = Vec::new();
        let mut squares = Vec::new();
        let mut scores = Vec::new();
        for r in 0..24 {
            let run = run_dsmc(&m, &SmootherConfig::new(1024, resampler, 300 + r)).unwrap();
            means.push(estimate(&run.block, |x| x[1]));
            squares.push(estimate(&run.block, |x| x[1] * x[1]));
            scores.push(estimate(&run.block, phi));
        }
        let (mean, se) = mean_se(&means);
        let band = if resampler == Resampler::Multinomial { 3.0 } else { 4.0 };
        assert!((mean - exact_mean).abs() < band * se, "{}: mean {mean} vs {exact_mean} (se {se})", resampler.name());
        // secondary checks share a family-wise band
        for (name, xs, exact) in [("second moment", &squares, exact_sq), ("score", &scores, exact_score)] {
            let (mean, se) = mean_se(xs);
            assert!((mean - exact).abs() < 4.0 * se, "{}: {name} {mean} vs {exact} (se {se})", resampler.name());
        }
    }
}

#[test]
fn theta_logistic_without_density_dependence_matches_kalman() {
    // τ_1 = 0: x_t = x_{t-1} + τ_0 + noise, observed in Gaussian noise
    let p = ThetaLogisticParams { tau0: 0.2, tau1: 0.0, tau2: 0.5, q: 0.3, r: 0.4 };
    let mut rng = StreamKey::new(9, 0, 0, Role::Simulation).stream();
    let (_, ys) = ThetaLogisticModel::simulate(&p, 15, &mut rng).unwrap();
    let m = ThetaLogisticModel::with_ieks(p, ys.clone(), 25, 1.0).unwrap();
    let lin = dsmc_core::gaussian::linearize(&m.ssm, &vec![nalgebra::DVector::zeros(1); 16]).unwrap();
    let k = kalman_smoother(&lin).unwrap();
    let reps: Vec<Vec<f64>> = (0..12)
        .map(|r| smoothed_means(&run_dsmc(&m, &SmootherConfig::new(1024, Resampler::Multinomial, r)).unwrap().block))
        .collect();
    for t in 0..=15 {
        let xs: Vec<f64> = reps.iter().map(|v| v[t]).collect();
        let (mean, se) = mean_se(&xs);
        assert!((mean - k.marginals[t].mean[0]).abs() < 3.0 * se.max(1e-4), "t={t}");
    }
}

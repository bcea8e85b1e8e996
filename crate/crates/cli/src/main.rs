use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dsmc_cli::config::{ExperimentConfig, ExperimentKind, Method, ResamplerChoice};
use dsmc_cli::experiment::{oracle_check, prepare, summarize};
use dsmc_cli::gibbs::{run_pgibbs, write_pgibbs};
use dsmc_cli::output::write_rows;
use dsmc_cli::stats;

#[derive(Parser)]
#[command(name = "dsmc", version, about = "Parallel-in-time particle smoothing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run smoothing replicates and write one CSV row per method and replicate.
    Smooth(Overrides),
    /// Run a theta-logistic particle Gibbs chain and write one CSV row per kept sweep.
    Pgibbs(Overrides),
    /// Run replicates and print per-method means, spreads and timings.
    Bench(Overrides),
    /// Compare pooled smoothed means with the exact Kalman smoother.
    CheckOracle(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long = "N")]
    n_particles: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Selects the method as well: dense choices run `dsmc`, lazy ones `dsmc-mh` / `dsmc-rs`.
    #[arg(long, value_enum)]
    resampler: Option<ResamplerChoice>,
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    mh_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Gibbs sweeps.
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave wall_time_ms empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl Overrides {
    fn resolve(self, default_kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::for_experiment(self.experiment.unwrap_or(default_kind)),
        };
        if let Some(e) = self.experiment {
            c.experiment = e;
        }
        if self.horizon.is_some() {
            c.horizon = self.horizon;
        }
        if let Some(n) = self.n_particles {
            c.n_particles = n;
        }
        if let Some(r) = self.replicates {
            c.replicates = r;
        }
        if let Some(r) = self.resampler {
            match r {
                ResamplerChoice::Multinomial | ResamplerChoice::Systematic => c.resampler = r,
                _ => {}
            }
            if self.methods.is_none() {
                c.methods = vec![r.method()];
            }
        }
        if let Some(m) = self.methods {
            c.methods = m;
        }
        if let Some(s) = self.mh_steps {
            c.mh_steps = s;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(s) = self.data_seed {
            c.data_seed = s;
        }
        if let Some(s) = self.sweeps {
            c.gibbs.sweeps = s;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.no_timing {
            c.timing = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Smooth(o) => {
            let config = o.resolve(ExperimentKind::LgssmCheck)?;
            let rows = dsmc_cli::run_experiment(&config)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                log::error!("{failed} of {} replicates failed", rows.len());
            }
            Ok(failed == 0)
        }
        Command::Bench(o) => {
            let config = o.resolve(ExperimentKind::Cox)?;
            let prepared = prepare(&config)?;
            let rows = prepared.run_rows();
            if let Some(p) = &config.out {
                write_rows(std::io::BufWriter::new(std::fs::File::create(p)?), &rows)?;
            }
            println!("experiment={} T={} N={} replicates={}", config.experiment.name(), prepared.horizon, config.n_particles, config.replicates);
            println!("{:<8} {:>5} {:>14} {:>12} {:>12} {:>14}", "method", "ok", "mean", "sd", "ms/rep", "weight_evals");
            for s in summarize(&rows) {
                let ms = s.mean_wall_time_ms.map_or("-".to_string(), |v| format!("{v:.1}"));
                println!(
                    "{:<8} {:>5} {:>14.6} {:>12.6} {:>12} {:>14.0}",
                    s.method, s.replicates, s.mean, s.std_dev, ms, s.mean_weight_evals
                );
            }
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
        Command::Pgibbs(o) => {
            let config = o.resolve(ExperimentKind::ThetaLogistic)?;
            let run = run_pgibbs(&config)?;
            write_pgibbs(config.out.as_deref(), &run)?;
            let rates = &run.update_rates;
            eprintln!(
                "update rate: mean {:.3}, sd {:.3}, min {:.3}, max {:.3}",
                stats::mean(rates),
                stats::std_dev(rates),
                rates.iter().cloned().fold(f64::INFINITY, f64::min),
                rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            );
            for (k, name) in dsmc_cli::gibbs::THETA_NAMES.iter().enumerate() {
                let series: Vec<f64> = run.records.iter().map(|r| r.theta[k]).collect();
                match stats::acf(&series, 10.min(series.len().saturating_sub(1))) {
                    Ok(a) => eprintln!("{name}: mean {:.4}, acf(1) {:.3}, acf(10) {:.3}", stats::mean(&series), a[1.min(a.len() - 1)], a[a.len() - 1]),
                    Err(e) => eprintln!("{name}: {e}"),
                }
            }
            Ok(true)
        }
        Command::CheckOracle(o) => {
            let config = o.resolve(ExperimentKind::LgssmCheck)?;
            let report = oracle_check(&config)?;
            println!("t,exact_mean,pooled_mean,se,z");
            for t in 0..report.exact_means.len() {
                let z = (report.pooled_means[t] - report.exact_means[t]) / report.standard_errors[t];
                println!("{t},{},{},{},{z:.3}", report.exact_means[t], report.pooled_means[t], report.standard_errors[t]);
            }
            // 4 SE keeps the family-wise false alarm rate small over ~100 time steps
            let pass = report.max_abs_z <= 4.0;
            eprintln!("max |z| = {:.3} over {} time steps ({})", report.max_abs_z, report.exact_means.len(), if pass { "ok" } else { "FAIL" });
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

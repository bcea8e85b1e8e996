//! Observation files: one value per line, `#` starts a comment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dsmc_core::{Role, StreamKey};

use crate::models::{ThetaLogisticModel, ThetaLogisticParams};

/// The bundled nutria series (120 log-scale counts).
pub fn nutria_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("nutria.txt")
}

pub fn parse_series(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().with_context(|| format!("line {}: {line:?} is not a number", k + 1))?;
        if !v.is_finite() {
            bail!("line {}: non-finite value", k + 1);
        }
        out.push(v);
    }
    if out.is_empty() {
        bail!("no observations found");
    }
    Ok(out)
}

pub fn load_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_series(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    /// The file was unavailable; data were simulated from the model.
    Synthetic,
}

/// Theta-logistic observations from `path` (or the nutria file), truncated to
/// `horizon + 1` values when a horizon is given. Falls back to data simulated
/// at `params` with `data_seed` when the file cannot be read.
pub fn theta_logistic_data(
    path: Option<&Path>,
    horizon: Option<usize>,
    params: &ThetaLogisticParams,
    data_seed: u64,
) -> Result<(Vec<f64>, DataSource)> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(nutria_path);
    match load_series(&path) {
        Ok(mut ys) => {
            if let Some(t) = horizon {
                if t + 1 > ys.len() {
                    bail!("T = {t} exceeds the {} observations in {}", ys.len(), path.display());
                }
                ys.truncate(t + 1);
            }
            Ok((ys, DataSource::File(path)))
        }
        Err(e) => {
            log::warn!("{e:#}; simulating theta-logistic data instead");
            let mut rng = StreamKey::new(data_seed, 0, 0, Role::Simulation).stream();
            let (_, ys) = ThetaLogisticModel::simulate(params, horizon.unwrap_or(119), &mut rng)?;
            Ok((ys, DataSource::Synthetic))
        }
    }
}

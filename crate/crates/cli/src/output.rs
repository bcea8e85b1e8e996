//! CSV records. Column order is fixed by field order.

use std::io::Write;

use anyhow::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub n_particles: usize,
    pub method: String,
    pub replicate: usize,
    pub estimate: Option<f64>,
    /// Empty when timing is disabled.
    pub wall_time_ms: Option<f64>,
    /// Combine levels; empty for sequential methods.
    pub levels: Option<usize>,
    pub weight_evals: u64,
    pub log_norm_const: Option<f64>,
    /// Seed of this replicate's streams.
    pub seed: u64,
    pub config_hash: String,
    pub error: Option<String>,
}

pub fn write_rows<W: Write>(sink: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub const HEADER: [&str; 13] = [
    "experiment",
    "T",
    "N",
    "method",
    "replicate",
    "estimate",
    "wall_time_ms",
    "levels",
    "weight_evals",
    "log_norm_const",
    "seed",
    "config_hash",
    "error",
];

pub fn read_rows<R: std::io::Read>(source: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(source);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// One Gibbs sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub sweep: usize,
    pub theta: Vec<f64>,
    /// Fraction of time steps where the star moved.
    pub update_fraction: f64,
    pub star: Option<Vec<f64>>,
}

pub fn write_chain<W: Write>(sink: W, theta_names: &[&str], horizon: usize, records: &[ChainRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let with_star = records.first().is_some_and(|r| r.star.is_some());
    let mut header: Vec<String> = vec!["sweep".into()];
    header.extend(theta_names.iter().map(|s| s.to_string()));
    header.push("update_fraction".into());
    if with_star {
        header.extend((0..=horizon).map(|t| format!("x{t}")));
    }
    w.write_record(&header)?;
    for r in records {
        let mut fields = vec![r.sweep.to_string()];
        fields.extend(r.theta.iter().map(|v| v.to_string()));
        fields.push(r.update_fraction.to_string());
        if let Some(star) = &r.star {
            fields.extend(star.iter().map(|v| v.to_string()));
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(error: Option<&str>) -> ResultRow {
        ResultRow {
            experiment: "cox".into(),
            horizon: 32,
            n_particles: 250,
            method: "dsmc".into(),
            replicate: 3,
            estimate: Some(-1.25),
            wall_time_ms: None,
            levels: Some(6),
            weight_evals: 1000,
            log_norm_const: None,
            seed: 99,
            config_hash: "00ff".into(),
            error: error.map(String::from),
        }
    }

    #[test]
    fn header_matches_field_order() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[row(None)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
        let mut empty = Vec::new();
        write_rows(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), HEADER.join(","));
    }

    #[test]
    fn quoted_errors_round_trip() {
        let rows = vec![row(Some("bad, \"quoted\"\nmessage")), row(None)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("\"bad, \"\"quoted\"\""));
        assert_eq!(read_rows(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn chain_header_includes_star_columns() {
        let rec = ChainRecord { sweep: 1, theta: vec![0.5], update_fraction: 1.0, star: Some(vec![0.0, 1.0]) };
        let mut buf = Vec::new();
        write_chain(&mut buf, &["a"], 1, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sweep,a,update_fraction,x0,x1");
    }
}

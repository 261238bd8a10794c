//! Named experiments over the blend pipeline and their reports.
//!
//! Every experiment returns a [`MetricsReport`] with the same envelope:
//! per-point records, each tagged with the config digest, plus a summary of
//! pass/fail criteria. Monte-Carlo comparisons use the rule
//! `|empirical - reference| <= 3 SE + 1e-9` per scalar.

mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blend::BlendError;
use crate::config::ConfigError;
use crate::flow::FlowError;
use crate::output::write_files_atomically;
use crate::polarize::PolarizeError;
use crate::semantics::SemanticsError;

pub use experiments::ExperimentRunner;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid experiment setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Polarize(#[from] PolarizeError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error("writing report to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: Option<f64>,
    pub threshold: String,
    /// `None` when the run cannot decide (too few samples, vacuous setup).
    pub pass: Option<bool>,
}

impl Criterion {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: value.is_finite().then_some(value),
            threshold: threshold.into(),
            pass: Some(pass),
        }
    }

    pub fn inconclusive(name: impl Into<String>, threshold: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: None,
            threshold: threshold.into(),
            pass: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRecord {
    pub config_digest: String,
    pub label: String,
    pub score: Vec<f64>,
    pub mean: Option<Vec<f64>>,
    pub mean_se: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub oracle_mean: Option<Vec<f64>>,
    pub oracle_covariance: Option<Vec<Vec<f64>>>,
    /// Euclidean distance between `mean` and `oracle_mean`.
    pub mean_discrepancy: Option<f64>,
    /// Largest `|gap| / SE` over the mean coordinates.
    pub mean_z: Option<f64>,
    /// Largest `|gap| / SE` over the covariance entries.
    pub covariance_z: Option<f64>,
    pub eval_count: Option<u64>,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_digest: String,
    pub experiment: String,
    pub records: Vec<MetricRecord>,
    pub summary: Summary,
}

impl MetricsReport {
    pub fn new(config_digest: impl Into<String>, experiment: impl Into<String>) -> Self {
        Self {
            config_digest: config_digest.into(),
            experiment: experiment.into(),
            records: Vec::new(),
            summary: Summary::default(),
        }
    }

    /// False when any criterion failed; inconclusive criteria do not count.
    pub fn passed(&self) -> bool {
        self.summary.criteria.iter().all(|c| c.pass != Some(false))
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.summary.criteria.iter().find(|c| c.name == name)
    }
}

/// Wall-clock time of one stage; kept out of the report so reruns reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub timings: Vec<Timing>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn opt_vec(v: &Option<Vec<f64>>) -> String {
    v.as_deref().map(join).unwrap_or_default()
}

fn opt_num<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_csv(report: &MetricsReport) -> Vec<u8> {
    let mut buf = format!("# config_digest: {}\n", report.config_digest).into_bytes();
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record([
        "config_digest",
        "label",
        "score",
        "mean",
        "mean_se",
        "oracle_mean",
        "mean_discrepancy",
        "mean_z",
        "covariance_z",
        "eval_count",
        "values",
    ])
    .expect("in-memory write");
    for r in &report.records {
        let values = r
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.config_digest.clone(),
            r.label.clone(),
            join(&r.score),
            opt_vec(&r.mean),
            opt_vec(&r.mean_se),
            opt_vec(&r.oracle_mean),
            opt_num(r.mean_discrepancy),
            opt_num(r.mean_z),
            opt_num(r.covariance_z),
            opt_num(r.eval_count),
            values,
        ])
        .expect("in-memory write");
    }
    drop(w);
    buf
}

/// Plot-ready series: target score against the empirical endpoint mean.
fn series_csv(report: &MetricsReport) -> Vec<u8> {
    let mut buf = format!("# config_digest: {}\n", report.config_digest).into_bytes();
    let rows: Vec<&MetricRecord> = report.records.iter().filter(|r| r.mean.is_some()).collect();
    let n = rows.first().map_or(0, |r| r.score.len());
    let d = rows.first().and_then(|r| r.mean.as_ref()).map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(&mut buf);
    let mut header = vec!["label".to_string()];
    header.extend((1..=n).map(|i| format!("score_{i}")));
    header.extend((1..=d).map(|i| format!("mean_{i}")));
    header.extend((1..=d).map(|i| format!("mean_se_{i}")));
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut row = vec![r.label.clone()];
        row.extend(r.score.iter().map(|v| v.to_string()));
        row.extend(r.mean.iter().flatten().map(|v| v.to_string()));
        match &r.mean_se {
            Some(se) => row.extend(se.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), d)),
        }
        w.write_record(&row).expect("in-memory write");
    }
    drop(w);
    buf
}

fn report_files(report: &MetricsReport) -> Vec<(&'static str, Vec<u8>)> {
    vec![
        (
            "metrics.json",
            serde_json::to_vec_pretty(report).expect("report serializes"),
        ),
        ("metrics.csv", metrics_csv(report)),
        ("series.csv", series_csv(report)),
    ]
}

fn write_all(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>, HarnessError> {
    write_files_atomically(dir, files).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Writes `metrics.json`, `metrics.csv` and `series.csv` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    write_all(dir, &report_files(report))
}

/// Like [`emit_report`], plus `timing.json`.
pub fn emit_output(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = report_files(&output.report);
    let timing = serde_json::json!({
        "config_digest": output.report.config_digest,
        "experiment": output.report.experiment,
        "timings": output.timings,
    });
    files.push((
        "timing.json",
        serde_json::to_vec_pretty(&timing).expect("timings serialize"),
    ));
    write_all(dir, &files)
}

/// Reads back a `metrics.json`.
pub fn read_report(path: &Path) -> Result<MetricsReport, HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io)?;
    serde_json::from_str(&text).map_err(|e| io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}

//! Angular-error statistics, k-fold cross-validation and per-cluster
//! robustness analysis.

mod cluster;
mod cross_val;
mod metrics;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cluster::{chromaticity, cluster_robustness, kmeans, Cluster, ClusterReport, KMEANS_MAX_ITERS, KMEANS_RESTARTS};
pub use cross_val::{
    cross_validate, cross_validate_with, evaluate_samples, fold_assignment, fold_train_seed, CvReport, EvalMethod,
    FoldResult,
};
pub use metrics::{compute_metrics, quantile_sorted, MetricsReport, METRIC_COLUMNS};

use crate::error::{Error, Result};

/// One CSV line: a method on one fold (or pooled) and one cluster (or all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub seed: u64,
    pub fold: String,
    pub cluster: String,
    pub n: usize,
    #[serde(rename = "Mean")]
    pub mean: f64,
    #[serde(rename = "Median")]
    pub median: f64,
    #[serde(rename = "Tri.")]
    pub trimean: f64,
    #[serde(rename = "Best-25%")]
    pub best25: f64,
    #[serde(rename = "Worst-25%")]
    pub worst25: f64,
}

impl MetricsRow {
    pub fn new(method: &str, seed: u64, fold: String, cluster: String, m: &MetricsReport) -> Self {
        Self {
            method: method.to_string(),
            seed,
            fold,
            cluster,
            n: m.n,
            mean: m.mean,
            median: m.median,
            trimean: m.trimean,
            best25: m.best25_mean,
            worst25: m.worst25_mean,
        }
    }
}

/// Per-fold rows, the pooled row, then one pooled row per cluster.
pub fn report_rows(cv: &CvReport, clusters: Option<&ClusterReport>) -> Vec<MetricsRow> {
    let mut rows: Vec<MetricsRow> = cv
        .folds
        .iter()
        .map(|f| MetricsRow::new(&cv.method, cv.seed, f.fold.to_string(), "all".into(), &f.metrics))
        .collect();
    rows.push(MetricsRow::new(&cv.method, cv.seed, "pooled".into(), "all".into(), &cv.pooled));
    if let Some(cr) = clusters {
        for (j, c) in cr.clusters.iter().enumerate() {
            rows.push(MetricsRow::new(&cv.method, cv.seed, "pooled".into(), j.to_string(), &c.metrics));
        }
    }
    rows
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Plain-text table with the standard column order.
pub fn format_table(rows: &[MetricsRow]) -> String {
    let mut out = format!("{:<22} {:>6} {:>7} {:>4}", "method", "fold", "cluster", "n");
    for c in METRIC_COLUMNS {
        out.push_str(&format!(" {c:>9}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:<22} {:>6} {:>7} {:>4} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}\n",
            r.method, r.fold, r.cluster, r.n, r.mean, r.median, r.trimean, r.best25, r.worst25
        ));
    }
    out
}

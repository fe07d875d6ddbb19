use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::train::AggregateReport;

/// Multi-run outcome of one network on one dataset; written by `train` as
/// `summary.json` and consumed by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkResult {
    pub network: String,
    pub dataset: String,
    pub hidden_layers: usize,
    /// True when no auxiliary head is enabled.
    pub baseline: bool,
    pub aggregate: AggregateReport,
}

impl NetworkResult {
    pub fn new(cfg: &ExperimentConfig, dataset: &str, aggregate: AggregateReport) -> Self {
        Self {
            network: cfg.name.clone(),
            dataset: dataset.to_string(),
            hidden_layers: cfg.hidden_layers,
            baseline: !cfg.tasks.any(),
            aggregate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub test_acc: f64,
}

/// One row of the emitted report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub network: String,
    pub dataset: String,
    pub hidden_layers: usize,
    pub runs: Vec<ReportRun>,
    pub mean: f64,
    pub sem: f64,
    /// `100 · (mean − baseline mean)`, rounded to two decimals; `None` when
    /// no baseline with the same dataset and depth is among the results.
    pub delta_pp_vs_baseline: Option<f64>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Report rows in input order.
pub fn build_report(results: &[NetworkResult]) -> Result<Vec<ReportEntry>> {
    if results.is_empty() {
        return Err(invalid("no results to report"));
    }
    Ok(results
        .iter()
        .map(|r| {
            let baseline = results
                .iter()
                .find(|b| b.baseline && b.dataset == r.dataset && b.hidden_layers == r.hidden_layers);
            ReportEntry {
                network: r.network.clone(),
                dataset: r.dataset.clone(),
                hidden_layers: r.hidden_layers,
                runs: r
                    .aggregate
                    .runs
                    .iter()
                    .map(|s| ReportRun {
                        seed: s.seed,
                        best_epoch: s.best_epoch,
                        test_acc: s.test_acc,
                    })
                    .collect(),
                mean: r.aggregate.mean,
                sem: r.aggregate.sem,
                delta_pp_vs_baseline: baseline.map(|b| round2((r.aggregate.mean - b.aggregate.mean) * 100.0)),
            }
        })
        .collect())
}

pub fn emit_report(results: &[NetworkResult], path: &Path) -> Result<()> {
    let entries = build_report(results)?;
    let text = serde_json::to_string_pretty(&entries).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let io = |source| Error::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Reads `summary.json` files under a directory, or one file holding either
/// a single result or an array of them. Sorted by dataset, depth, network.
pub fn collect_results(path: &Path) -> Result<Vec<NetworkResult>> {
    let files = if path.is_dir() {
        let mut v = Vec::new();
        find_summaries(path, &mut v)?;
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut results = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|source| Error::Io {
            path: f.display().to_string(),
            source,
        })?;
        let json = |source| Error::Json {
            path: f.display().to_string(),
            source,
        };
        if text.trim_start().starts_with('[') {
            results.extend(serde_json::from_str::<Vec<NetworkResult>>(&text).map_err(json)?);
        } else {
            results.push(serde_json::from_str(&text).map_err(json)?);
        }
    }
    if results.is_empty() {
        return Err(invalid(format!("no summary.json found under {}", path.display())));
    }
    results.sort_by(|a, b| {
        (&a.dataset, a.hidden_layers, !a.baseline, &a.network).cmp(&(&b.dataset, b.hidden_layers, !b.baseline, &b.network))
    });
    Ok(results)
}

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{invalid, Result};
use crate::tensor::DenseMatrix;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of `nodes` whose arg-max class in `scores` equals the label.
pub fn evaluate_accuracy(scores: &DenseMatrix, labels: &[Option<usize>], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(invalid("accuracy over an empty node set"));
    }
    let mut correct = 0usize;
    for &n in nodes {
        if n >= scores.nrows() {
            return Err(invalid(format!("node {n} out of range")));
        }
        let y = labels
            .get(n)
            .copied()
            .flatten()
            .ok_or_else(|| invalid(format!("node {n} has no label")))?;
        if argmax(scores.row(n)) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Mean and standard error of the mean (sample std with `n - 1`, over √n).
pub fn mean_sem(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(invalid("statistics over no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Per-run outcome as it appears in aggregated output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub network: String,
    pub runs: Vec<RunSummary>,
    /// Mean test accuracy.
    pub mean: f64,
    pub sem: f64,
    /// Mean best-epoch validation accuracy, the grid ranking key.
    pub val_mean: f64,
    pub val_sem: f64,
}

impl AggregateReport {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_acc).collect()
    }
}

pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport> {
    let first = reports.first().ok_or_else(|| invalid("aggregate of no runs"))?;
    let runs: Vec<RunSummary> = reports
        .iter()
        .map(|r| RunSummary {
            seed: r.seed,
            best_epoch: r.best_epoch,
            val_acc: r.best_val_accuracy,
            test_acc: r.test_accuracy,
        })
        .collect();
    let (mean, sem) = mean_sem(&runs.iter().map(|r| r.test_acc).collect::<Vec<_>>())?;
    let (val_mean, val_sem) = mean_sem(&runs.iter().map(|r| r.val_acc).collect::<Vec<_>>())?;
    Ok(AggregateReport {
        network: first.network.clone(),
        runs,
        mean,
        sem,
        val_mean,
        val_sem,
    })
}

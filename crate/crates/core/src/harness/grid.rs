use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::{invalid, Error, Result};
use crate::model::ReconstructionMode;
use crate::tasks::VertexSetPolicy;
use crate::train::{aggregate, train_runs, AggregateReport, PreparedData};

/// Candidate values per tunable key. A missing key keeps the base value.
///
/// Points are enumerated as the cartesian product in the field order below,
/// with the last field varying fastest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub ae_weight: Option<Vec<f64>>,
    pub fr_weight: Option<Vec<f64>>,
    pub er_weight: Option<Vec<f64>>,
    pub fr_mode: Option<Vec<ReconstructionMode>>,
    pub fr_corrupted_count: Option<Vec<usize>>,
    pub er_mode: Option<Vec<ReconstructionMode>>,
    pub er_corrupted_count: Option<Vec<usize>>,
    pub vertex_set_policy: Option<Vec<VertexSetPolicy>>,
}

/// One assignment of the grid's keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ae_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fr_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub er_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fr_mode: Option<ReconstructionMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fr_corrupted_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub er_mode: Option<ReconstructionMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub er_corrupted_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex_set_policy: Option<VertexSetPolicy>,
}

fn axis<T: Clone>(values: &Option<Vec<T>>, key: &str) -> std::result::Result<Vec<Option<T>>, ConfigError> {
    match values {
        None => Ok(vec![None]),
        Some(v) if v.is_empty() => Err(ConfigError::Key {
            key: key.into(),
            message: "candidate list must not be empty".into(),
        }),
        Some(v) => Ok(v.iter().cloned().map(Some).collect()),
    }
}

impl GridSpec {
    pub fn from_toml(text: &str, origin: &Path) -> std::result::Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// All points, in enumeration order. A grid with no keys has one point.
    pub fn points(&self) -> std::result::Result<Vec<GridPoint>, ConfigError> {
        let ae = axis(&self.ae_weight, "ae_weight")?;
        let fr = axis(&self.fr_weight, "fr_weight")?;
        let er = axis(&self.er_weight, "er_weight")?;
        let frm = axis(&self.fr_mode, "fr_mode")?;
        let frc = axis(&self.fr_corrupted_count, "fr_corrupted_count")?;
        let erm = axis(&self.er_mode, "er_mode")?;
        let erc = axis(&self.er_corrupted_count, "er_corrupted_count")?;
        let vsp = axis(&self.vertex_set_policy, "vertex_set_policy")?;
        let mut out = Vec::new();
        for &ae_weight in &ae {
            for &fr_weight in &fr {
                for &er_weight in &er {
                    for &fr_mode in &frm {
                        for &fr_corrupted_count in &frc {
                            for &er_mode in &erm {
                                for &er_corrupted_count in &erc {
                                    for &vertex_set_policy in &vsp {
                                        out.push(GridPoint {
                                            ae_weight,
                                            fr_weight,
                                            er_weight,
                                            fr_mode,
                                            fr_corrupted_count,
                                            er_mode,
                                            er_corrupted_count,
                                            vertex_set_policy,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl GridPoint {
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        if let Some(w) = self.ae_weight {
            cfg.weights.ae = w;
        }
        if let Some(w) = self.fr_weight {
            cfg.weights.fr = w;
        }
        if let Some(w) = self.er_weight {
            cfg.weights.er = w;
        }
        if let Some(m) = self.fr_mode {
            cfg.fr.mode = m;
        }
        if let Some(c) = self.fr_corrupted_count {
            cfg.fr.corrupted_count = c;
        }
        if let Some(m) = self.er_mode {
            cfg.er.mode = m;
        }
        if let Some(c) = self.er_corrupted_count {
            cfg.er.corrupted_count = c;
        }
        if let Some(p) = self.vertex_set_policy {
            cfg.vertex_set_policy = p;
        }
        cfg
    }
}

/// Validation-only view of one run; test accuracy stays hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PointOutcome {
    Ok {
        val_mean: f64,
        val_sem: f64,
        runs: Vec<ValidationRun>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub point: GridPoint,
    #[serde(flatten)]
    pub outcome: PointOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWinner {
    pub index: usize,
    pub point: GridPoint,
    /// Full aggregate including test accuracy; only the winner gets one.
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResults {
    pub network: String,
    pub dataset: String,
    pub hidden_layers: usize,
    /// Every point in enumeration order.
    pub points: Vec<PointResult>,
    /// Indices of successful points, best mean validation accuracy first;
    /// ties keep enumeration order.
    pub ranking: Vec<usize>,
    pub winner: Option<GridWinner>,
}

/// Trains every grid point and ranks them by mean best-epoch validation
/// accuracy. A point whose setup or any run fails is recorded and skipped.
pub fn run_grid(base: &ExperimentConfig, grid: &GridSpec, data: &PreparedData) -> Result<GridResults> {
    let points = grid.points()?;
    if points.is_empty() {
        return Err(invalid("empty grid"));
    }
    let mut results = Vec::with_capacity(points.len());
    let mut aggregates = Vec::with_capacity(points.len());
    for (index, point) in points.into_iter().enumerate() {
        let cfg = point.apply(base);
        let run = cfg
            .validate_for(data.bundle.num_features())
            .map_err(Error::from)
            .and_then(|()| train_runs(data, &cfg))
            .and_then(|outs| aggregate(&outs.into_iter().map(|o| o.report).collect::<Vec<_>>()));
        let outcome = match run {
            Ok(agg) => {
                let outcome = PointOutcome::Ok {
                    val_mean: agg.val_mean,
                    val_sem: agg.val_sem,
                    runs: agg
                        .runs
                        .iter()
                        .map(|r| ValidationRun {
                            seed: r.seed,
                            best_epoch: r.best_epoch,
                            val_acc: r.val_acc,
                        })
                        .collect(),
                };
                aggregates.push(Some(agg));
                outcome
            }
            Err(e) => {
                aggregates.push(None);
                PointOutcome::Failed { error: e.to_string() }
            }
        };
        results.push(PointResult { index, point, outcome });
    }

    let mut ranking: Vec<usize> = (0..results.len()).filter(|&i| aggregates[i].is_some()).collect();
    let val = |i: usize| aggregates[i].as_ref().map_or(f64::NEG_INFINITY, |a| a.val_mean);
    ranking.sort_by(|&a, &b| val(b).total_cmp(&val(a)));
    let winner = ranking.first().map(|&i| GridWinner {
        index: i,
        point: results[i].point.clone(),
        aggregate: aggregates[i].clone().expect("ranked points succeeded"),
    });
    Ok(GridResults {
        network: base.name.clone(),
        dataset: data.bundle.name.clone(),
        hidden_layers: base.hidden_layers,
        points: results,
        ranking,
        winner,
    })
}

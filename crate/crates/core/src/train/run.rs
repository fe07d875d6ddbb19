use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{OptimizerState, PlateauSchedule};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::graph::{renormalize, row_normalize_features, GraphBundle};
use crate::model::{
    forward, Architecture, AuxTasks, CorruptionKind, CorruptionSpec, DropoutStreams, GraphInputs,
    HeadOutputs, MultiTaskModel,
};
use crate::tasks::{combine, risk_ae, risk_er, risk_fr, risk_main, TaskRisks, TaskWeights, VertexSetPolicy};
use crate::tensor::{DenseMatrix, Rng, Tape, TensorError, Var};

use super::metrics::evaluate_accuracy;

/// A bundle with its renormalized adjacency and preprocessed features,
/// shared read-only by every run on it.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub bundle: GraphBundle,
    pub inputs: GraphInputs,
    pub normalized_features: bool,
}

impl PreparedData {
    pub fn new(bundle: GraphBundle, normalize_features: bool) -> Result<Self> {
        bundle.validate()?;
        let adjacency = renormalize(&bundle.adjacency)?;
        let features = if normalize_features {
            row_normalize_features(&bundle.features)
        } else {
            bundle.features.clone()
        };
        let inputs = GraphInputs::new(adjacency, features)?;
        Ok(Self {
            bundle,
            inputs,
            normalized_features: normalize_features,
        })
    }

    pub fn all_nodes(&self) -> Vec<usize> {
        (0..self.bundle.num_nodes()).collect()
    }
}

/// L2 term `coef · ‖B‖²` of the first encoder layer.
pub fn l2_penalty(tape: &mut Tape, model: &MultiTaskModel, params: &[Var], coef: f64) -> Result<Var> {
    let w = *params
        .get(model.first_layer_index())
        .ok_or_else(|| invalid("parameter list does not match the model"))?;
    let ss = tape.sum_squares(w)?;
    Ok(tape.scale(ss, coef)?)
}

/// Weighted task risks of one forward pass. Main risk over `main_nodes`;
/// reconstruction risks over `aux_nodes`, which must equal `out.aux_rows`
/// when that is set.
pub fn task_loss(
    tape: &mut Tape,
    out: &HeadOutputs,
    model: &MultiTaskModel,
    data: &PreparedData,
    weights: &TaskWeights,
    main_nodes: &[usize],
    aux_nodes: &[usize],
) -> Result<Var> {
    let arch = model.architecture();
    let x = &data.inputs.features;
    let main = risk_main(tape, out.class_probs, &data.bundle.labels, main_nodes)?;
    let ae = out.ae.map(|r| risk_ae(tape, x, r, aux_nodes)).transpose()?;
    let fr = match (out.fr, arch.fr.as_ref()) {
        (Some(r), Some(spec)) => Some(risk_fr(tape, x, r, spec, aux_nodes)?),
        _ => None,
    };
    let er = match (out.er, out.er_target, arch.er.as_ref()) {
        (Some(r), Some(t), Some(spec)) => Some(risk_er(tape, t, r, spec, aux_nodes)?),
        _ => None,
    };
    combine(tape, &TaskRisks { main, ae, fr, er }, weights)
}

/// Architecture for `cfg`, with the run's corruption sets drawn from `base`.
pub fn build_architecture(
    cfg: &ExperimentConfig,
    num_features: usize,
    num_classes: usize,
    base: &Rng,
) -> Result<Architecture> {
    cfg.validate_for(num_features)?;
    let fr = if cfg.tasks.fr {
        Some(CorruptionSpec::sample(
            CorruptionKind::Features,
            num_features,
            cfg.fr.corrupted_count,
            cfg.fr.mode,
            &mut base.derive("corruption/features"),
        )?)
    } else {
        None
    };
    let er = if cfg.tasks.er {
        Some(CorruptionSpec::sample(
            CorruptionKind::Embeddings,
            cfg.hidden_units,
            cfg.er.corrupted_count,
            cfg.er.mode,
            &mut base.derive("corruption/embeddings"),
        )?)
    } else {
        None
    };
    Ok(Architecture {
        num_features,
        num_classes,
        hidden_units: cfg.hidden_units,
        hidden_layers: cfg.hidden_layers,
        dropout: cfg.dropout,
        aux: cfg.tasks,
        fr,
        er,
        er_target: cfg.er_target,
    })
}

/// Dropout-off scores of a model on the validation and test splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Weighted task risks on the validation split, without L2.
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Inference-mode evaluation. Reconstruction risks use the validation nodes
/// under the labeled-only policy and every node otherwise.
pub fn evaluate(
    model: &MultiTaskModel,
    data: &PreparedData,
    weights: &TaskWeights,
    policy: VertexSetPolicy,
) -> Result<Evaluation> {
    let splits = &data.bundle.splits;
    let all = data.all_nodes();
    let aux_rows = match policy {
        VertexSetPolicy::LabeledOnly => Some(splits.val.as_slice()),
        VertexSetPolicy::AllNodes => None,
    };
    let mut tape = Tape::new();
    // No draws happen with dropout off; the streams only satisfy the signature.
    let mut streams = DropoutStreams::new(&Rng::new(0));
    let out = forward(model, &data.inputs, &mut tape, false, &mut streams, aux_rows)?;
    let loss = task_loss(
        &mut tape,
        &out,
        model,
        data,
        weights,
        &splits.val,
        aux_rows.unwrap_or(&all),
    )?;
    let z = tape.value(out.class_probs);
    Ok(Evaluation {
        val_loss: tape.scalar(loss),
        val_accuracy: evaluate_accuracy(z, &data.bundle.labels, &splits.val)?,
        test_accuracy: evaluate_accuracy(z, &data.bundle.labels, &splits.test)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Minimized objective: weighted task risks plus L2.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used for this epoch's step.
    pub lr: f64,
}

/// How a run was set up, beyond what its name says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dataset: String,
    pub hidden_layers: usize,
    pub tasks: AuxTasks,
    pub weights: TaskWeights,
    pub vertex_set_policy: VertexSetPolicy,
    pub selection_metric: String,
    pub plateau_metric: String,
    /// `corrupted_count` is the size of the zeroed feature set M.
    pub fr_count_mapping: Option<String>,
    pub fr_indices: Option<Vec<usize>>,
    pub er_indices: Option<Vec<usize>>,
    pub lr_reductions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub network: String,
    pub seed: u64,
    /// Epochs are numbered from 0.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    pub test_accuracy: f64,
    pub metadata: RunMetadata,
    /// Not serialized, so reports of equal runs are byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Parameters as they were after the best epoch's update.
    pub best_model: MultiTaskModel,
}

/// Strictly better under: higher val accuracy, then lower val loss; an
/// exact tie keeps the earlier epoch.
fn improves(candidate: &Evaluation, best: Option<&Evaluation>) -> bool {
    match best {
        None => true,
        Some(b) => {
            candidate.val_accuracy > b.val_accuracy
                || (candidate.val_accuracy == b.val_accuracy && candidate.val_loss < b.val_loss)
        }
    }
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Tensor(TensorError::NonFinite { op }) => Error::Diverged {
            epoch,
            reason: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Loads the bundle named by `cfg` and trains one run.
pub fn train_run(bundle: &GraphBundle, cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let data = PreparedData::new(bundle.clone(), cfg.normalize_features)?;
    train_prepared(&data, cfg, seed)
}

/// One full-batch training run from `seed`.
pub fn train_prepared(data: &PreparedData, cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let started = Instant::now();
    if data.normalized_features != cfg.normalize_features {
        return Err(invalid("data was prepared with a different feature normalization"));
    }
    let bundle = &data.bundle;
    let base = Rng::new(seed);
    let arch = build_architecture(cfg, bundle.num_features(), bundle.num_classes, &base)?;
    let mut model = MultiTaskModel::new(arch, &base)?;
    let mut streams = DropoutStreams::new(&base);
    let weights = cfg.effective_weights();

    let splits = &bundle.splits;
    let all = data.all_nodes();
    let aux_rows = match cfg.vertex_set_policy {
        VertexSetPolicy::LabeledOnly => Some(splits.train.as_slice()),
        VertexSetPolicy::AllNodes => None,
    };
    let aux_nodes = aux_rows.unwrap_or(&all);

    let mut opt = OptimizerState::new(cfg.lr, model.parameters().iter().map(|p| p.value.dim()));
    let mut plateau = PlateauSchedule::new(cfg.plateau.patience, cfg.plateau.factor, cfg.plateau.threshold);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Evaluation, MultiTaskModel)> = None;

    for epoch in 0..cfg.epochs {
        let lr = opt.lr;
        let on_err = diverged(epoch);
        let mut tape = Tape::new();
        let out = forward(&model, &data.inputs, &mut tape, true, &mut streams, aux_rows).map_err(&on_err)?;
        let risks = task_loss(&mut tape, &out, &model, data, &weights, &splits.train, aux_nodes).map_err(&on_err)?;
        let l2 = l2_penalty(&mut tape, &model, &out.params, cfg.l2).map_err(&on_err)?;
        let total = tape.weighted_sum(&[(risks, 1.0), (l2, 1.0)]).map_err(|e| on_err(e.into()))?;
        let train_loss = tape.scalar(total);
        tape.backward(total).map_err(|e| on_err(e.into()))?;
        let grads: Vec<DenseMatrix> = out
            .params
            .iter()
            .zip(model.parameters())
            .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| DenseMatrix::zeros(p.value.dim())))
            .collect();
        opt.step(model.parameters_mut().iter_mut().map(|p| &mut p.value), &grads)
            .map_err(&on_err)?;

        let eval = evaluate(&model, data, &weights, cfg.vertex_set_policy).map_err(&on_err)?;
        plateau.observe(eval.val_loss, &mut opt.lr);
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: eval.val_loss,
            val_accuracy: eval.val_accuracy,
            lr,
        });
        if improves(&eval, best.as_ref().map(|b| &b.1)) {
            best = Some((epoch, eval, model.clone()));
        }
    }

    let (best_epoch, best_eval, best_model) = best.ok_or_else(|| invalid("no epochs were run"))?;
    let arch = model.architecture();
    let report = RunReport {
        network: cfg.name.clone(),
        seed,
        epochs,
        best_epoch,
        best_val_accuracy: best_eval.val_accuracy,
        best_val_loss: best_eval.val_loss,
        test_accuracy: best_eval.test_accuracy,
        metadata: RunMetadata {
            dataset: bundle.name.clone(),
            hidden_layers: cfg.hidden_layers,
            tasks: cfg.tasks,
            weights,
            vertex_set_policy: cfg.vertex_set_policy,
            selection_metric: "max val accuracy; ties: lower val loss, then earlier epoch".into(),
            plateau_metric: "val weighted task risks, L2 excluded".into(),
            fr_count_mapping: cfg.tasks.fr.then(|| {
                format!(
                    "corrupted_count = |M| = {} zeroed of {} features",
                    cfg.fr.corrupted_count,
                    bundle.num_features()
                )
            }),
            fr_indices: arch.fr.as_ref().map(|s| s.indices().to_vec()),
            er_indices: arch.er.as_ref().map(|s| s.indices().to_vec()),
            lr_reductions: plateau.reductions(),
        },
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { report, best_model })
}

/// Runs `cfg.runs` seeds, `cfg.seed + k` for run `k`.
pub fn train_runs(data: &PreparedData, cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    (0..cfg.runs as u64)
        .map(|k| train_prepared(data, cfg, cfg.seed + k))
        .collect()
}

/// Trained parameters plus what is needed to evaluate them again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub network: String,
    pub dataset: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub normalize_features: bool,
    pub weights: TaskWeights,
    pub vertex_set_policy: VertexSetPolicy,
    pub model: MultiTaskModel,
}

impl Checkpoint {
    pub fn from_run(outcome: &RunOutcome, cfg: &ExperimentConfig) -> Self {
        Self {
            network: outcome.report.network.clone(),
            dataset: outcome.report.metadata.dataset.clone(),
            seed: outcome.report.seed,
            best_epoch: outcome.report.best_epoch,
            normalize_features: cfg.normalize_features,
            weights: cfg.effective_weights(),
            vertex_set_policy: cfg.vertex_set_policy,
            model: outcome.best_model.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })
    }

    /// Scores the stored parameters on `bundle`.
    pub fn evaluate(&self, bundle: GraphBundle) -> Result<Evaluation> {
        let data = PreparedData::new(bundle, self.normalize_features)?;
        evaluate(&self.model, &data, &self.weights, self.vertex_set_policy)
    }
}

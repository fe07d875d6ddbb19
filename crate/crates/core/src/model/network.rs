use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::corruption::{corrupt_embeddings, CorruptionKind, CorruptionSpec};
use crate::error::{invalid, Error, Result};
use crate::graph::RenormalizedAdjacency;
use crate::tensor::{CsrMatrix, DenseMatrix, Rng, Tape, Var};

/// Which auxiliary heads exist. The main head always does.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxTasks {
    pub ae: bool,
    pub fr: bool,
    pub er: bool,
}

impl AuxTasks {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn any(&self) -> bool {
        self.ae || self.fr || self.er
    }
}

/// How the embedding-reconstruction target enters the graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErTarget {
    /// Constant per step: no gradient flows into the encoder via the target.
    #[default]
    Detached,
    /// The target stays on the tape and is differentiated through.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub num_features: usize,
    pub num_classes: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub dropout: f64,
    pub aux: AuxTasks,
    pub fr: Option<CorruptionSpec>,
    pub er: Option<CorruptionSpec>,
    #[serde(default)]
    pub er_target: ErTarget,
}

impl Architecture {
    /// One hidden layer of 16 units, 50% dropout, no auxiliary heads.
    pub fn plain(num_features: usize, num_classes: usize) -> Self {
        Self {
            num_features,
            num_classes,
            hidden_units: 16,
            hidden_layers: 1,
            dropout: 0.5,
            aux: AuxTasks::none(),
            fr: None,
            er: None,
            er_target: ErTarget::Detached,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 || self.num_classes == 0 {
            return Err(invalid("model needs at least one feature and one class"));
        }
        if self.hidden_units == 0 || self.hidden_layers == 0 {
            return Err(invalid("model needs at least one hidden layer of width >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.aux.fr {
            let spec = self
                .fr
                .as_ref()
                .ok_or_else(|| invalid("feature reconstruction enabled without a corruption set"))?;
            if spec.kind() != CorruptionKind::Features || spec.dim() != self.num_features {
                return Err(invalid("feature corruption set does not match the feature dimension"));
            }
        }
        if self.aux.er {
            let spec = self.er.as_ref().ok_or_else(|| {
                invalid("embedding reconstruction enabled without a corruption set")
            })?;
            if spec.kind() != CorruptionKind::Embeddings || spec.dim() != self.hidden_units {
                return Err(invalid("embedding corruption set does not match the embedding width"));
            }
        }
        Ok(())
    }
}

/// Owner of a parameter block: the shared encoder or exactly one head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Shared,
    Main,
    Ae,
    Fr,
    Er,
}

/// A GC weight matrix `B` together with its owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub group: ParamGroup,
    pub value: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    encoder: Vec<usize>,
    main: usize,
    ae: Option<[usize; 2]>,
    fr: Option<[usize; 2]>,
    er: Option<[usize; 2]>,
}

/// Shared encoder `g_sh` plus the main, AE, FR and ER heads.
///
/// Encoder: `hidden_layers` × [dropout, GC(hidden_units), relu].
/// Main head: dropout, GC(num_classes), softmax.
/// Auxiliary heads: dropout, GC(hidden_units), relu, dropout, GC(out), with
/// `out` the width of the reconstruction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParts", into = "ModelParts")]
pub struct MultiTaskModel {
    arch: Architecture,
    params: Vec<Parameter>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParts {
    architecture: Architecture,
    parameters: Vec<Parameter>,
}

impl From<MultiTaskModel> for ModelParts {
    fn from(m: MultiTaskModel) -> Self {
        Self {
            architecture: m.arch,
            parameters: m.params,
        }
    }
}

impl TryFrom<ModelParts> for MultiTaskModel {
    type Error = Error;

    fn try_from(parts: ModelParts) -> Result<Self> {
        MultiTaskModel::from_parts(parts.architecture, parts.parameters)
    }
}

fn plan(arch: &Architecture) -> (Vec<(String, ParamGroup, usize, usize)>, Layout) {
    let mut shapes = Vec::new();
    let mut push = |name: String, group, rows, cols| {
        shapes.push((name, group, rows, cols));
        shapes.len() - 1
    };
    let h = arch.hidden_units;
    let encoder = (0..arch.hidden_layers)
        .map(|l| {
            let fan_in = if l == 0 { arch.num_features } else { h };
            push(format!("shared.gc{l}"), ParamGroup::Shared, fan_in, h)
        })
        .collect();
    let main = push("main.gc".into(), ParamGroup::Main, h, arch.num_classes);
    let mut head = |on: bool, tag: &str, group, out: usize| {
        on.then(|| {
            [
                push(format!("{tag}.gc0"), group, h, h),
                push(format!("{tag}.gc1"), group, h, out),
            ]
        })
    };
    let ae = head(arch.aux.ae, "ae", ParamGroup::Ae, arch.num_features);
    let fr = head(
        arch.aux.fr,
        "fr",
        ParamGroup::Fr,
        arch.fr.as_ref().map_or(0, CorruptionSpec::output_dim),
    );
    let er = head(
        arch.aux.er,
        "er",
        ParamGroup::Er,
        arch.er.as_ref().map_or(0, CorruptionSpec::output_dim),
    );
    (
        shapes,
        Layout {
            encoder,
            main,
            ae,
            fr,
            er,
        },
    )
}

impl MultiTaskModel {
    /// Builds the network and draws its initial weights from `rng`.
    pub fn new(arch: Architecture, rng: &Rng) -> Result<Self> {
        arch.validate()?;
        let (shapes, layout) = plan(&arch);
        let params = shapes
            .into_iter()
            .map(|(name, group, r, c)| Parameter {
                name,
                group,
                value: DenseMatrix::zeros((r, c)),
            })
            .collect();
        let mut model = Self {
            arch,
            params,
            layout,
        };
        init_parameters(&mut model, rng);
        Ok(model)
    }

    /// Reassembles a model from saved parameters, checking names and shapes.
    pub fn from_parts(arch: Architecture, params: Vec<Parameter>) -> Result<Self> {
        arch.validate()?;
        let (shapes, layout) = plan(&arch);
        if shapes.len() != params.len() {
            return Err(invalid(format!(
                "expected {} parameter blocks, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, group, r, c), p) in shapes.iter().zip(&params) {
            if &p.name != name || p.group != *group || p.value.dim() != (*r, *c) {
                return Err(invalid(format!(
                    "parameter {} ({:?}, {:?}) does not match expected {name} ({r}, {c})",
                    p.name,
                    p.group,
                    p.value.dim()
                )));
            }
        }
        Ok(Self {
            arch,
            params,
            layout,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Index of the first encoder layer's weight, the only L2-penalized one.
    pub fn first_layer_index(&self) -> usize {
        self.layout.encoder[0]
    }
}

/// Glorot-uniform initialization of every weight. Each block draws from its
/// own sub-stream, so adding heads leaves the other blocks untouched.
pub fn init_parameters(model: &mut MultiTaskModel, rng: &Rng) {
    for p in &mut model.params {
        let (fan_in, fan_out) = p.value.dim();
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut r = rng.derive(&format!("init/{}", p.name));
        p.value.mapv_inplace(|_| r.uniform_range(-bound, bound));
    }
}

/// Dropout random streams, one per dropout site group.
#[derive(Debug, Clone)]
pub struct DropoutStreams {
    pub encoder: Rng,
    pub encoder_fr: Rng,
    pub main: Rng,
    pub ae: Rng,
    pub fr: Rng,
    pub er: Rng,
}

impl DropoutStreams {
    pub fn new(rng: &Rng) -> Self {
        Self {
            encoder: rng.derive("dropout/encoder"),
            encoder_fr: rng.derive("dropout/encoder-fr"),
            main: rng.derive("dropout/main"),
            ae: rng.derive("dropout/ae"),
            fr: rng.derive("dropout/fr"),
            er: rng.derive("dropout/er"),
        }
    }
}

/// Per-dataset tensors a forward pass reads.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub adjacency: RenormalizedAdjacency,
    /// Vertex features after preprocessing; also the reconstruction target.
    pub features: DenseMatrix,
    pub sparse_features: Arc<CsrMatrix>,
}

impl GraphInputs {
    pub fn new(adjacency: RenormalizedAdjacency, features: DenseMatrix) -> Result<Self> {
        if features.nrows() != adjacency.num_nodes() {
            return Err(invalid(format!(
                "{} feature rows for {} nodes",
                features.nrows(),
                adjacency.num_nodes()
            )));
        }
        let sparse_features = Arc::new(CsrMatrix::from_dense(&features));
        Ok(Self {
            adjacency,
            features,
            sparse_features,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }
}

/// Everything one forward pass produced, as values on the tape.
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    /// Parameter leaves, in [`MultiTaskModel::parameters`] order.
    pub params: Vec<Var>,
    /// Clean encoding `g_sh(X)`.
    pub embeddings: Var,
    /// Softmax class scores for every node.
    pub class_probs: Var,
    pub ae: Option<Var>,
    pub fr: Option<Var>,
    pub er: Option<Var>,
    /// The embeddings as the ER head's reconstruction target.
    pub er_target: Option<Var>,
    /// When set, reconstruction outputs hold only these node rows, in order.
    pub aux_rows: Option<Vec<usize>>,
    pub encoder_passes: usize,
}

/// `Â X B`, multiplied in whichever order keeps the intermediate narrower.
pub fn gc_forward(tape: &mut Tape, adjacency: &RenormalizedAdjacency, x: Var, weight: Var) -> Result<Var> {
    let (d_in, d_out) = tape.value(weight).dim();
    let x_cols = tape.value(x).ncols();
    if x_cols != d_in {
        return Err(crate::tensor::TensorError::DimensionMismatch {
            op: "gc_forward",
            lhs: tape.value(x).dim(),
            rhs: (d_in, d_out),
        }
        .into());
    }
    let a = adjacency.matrix();
    if d_in < d_out {
        let ax = tape.spmm(a, x)?;
        Ok(tape.matmul(ax, weight)?)
    } else {
        let xb = tape.matmul(x, weight)?;
        Ok(tape.spmm(a, xb)?)
    }
}

/// `Â X B` for a constant sparse input `X`.
pub fn gc_forward_sparse(
    tape: &mut Tape,
    adjacency: &RenormalizedAdjacency,
    x: &Arc<CsrMatrix>,
    weight: Var,
) -> Result<Var> {
    let xb = tape.spmm(x, weight)?;
    Ok(tape.spmm(adjacency.matrix(), xb)?)
}

/// Rows `rows` of `Â X B`, computed as `(ÂX)[rows] · B`.
fn gc_forward_rows(
    tape: &mut Tape,
    adjacency: &RenormalizedAdjacency,
    x: Var,
    weight: Var,
    rows: Option<&[usize]>,
) -> Result<Var> {
    match rows {
        None => gc_forward(tape, adjacency, x, weight),
        Some(rows) => {
            let ax = tape.spmm(adjacency.matrix(), x)?;
            let picked = tape.gather_rows(ax, rows)?;
            Ok(tape.matmul(picked, weight)?)
        }
    }
}

struct Pass<'a> {
    model: &'a MultiTaskModel,
    inputs: &'a GraphInputs,
    params: &'a [Var],
    training: bool,
}

impl Pass<'_> {
    fn p(&self) -> f64 {
        self.model.arch.dropout
    }

    fn encode(&self, tape: &mut Tape, x: &Arc<CsrMatrix>, rng: &mut Rng) -> Result<Var> {
        let adj = &self.inputs.adjacency;
        let enc = &self.model.layout.encoder;
        let first = if self.training && self.p() > 0.0 {
            Arc::new(x.dropout(self.p(), rng)?)
        } else {
            Arc::clone(x)
        };
        let mut h = gc_forward_sparse(tape, adj, &first, self.params[enc[0]])?;
        h = tape.relu(h)?;
        for &w in &enc[1..] {
            let d = tape.dropout(h, self.p(), self.training, rng)?;
            let g = gc_forward(tape, adj, d, self.params[w])?;
            h = tape.relu(g)?;
        }
        Ok(h)
    }

    fn decode(
        &self,
        tape: &mut Tape,
        weights: [usize; 2],
        input: Var,
        rng: &mut Rng,
        rows: Option<&[usize]>,
    ) -> Result<Var> {
        let adj = &self.inputs.adjacency;
        let d = tape.dropout(input, self.p(), self.training, rng)?;
        let g = gc_forward(tape, adj, d, self.params[weights[0]])?;
        let h = tape.relu(g)?;
        let d = tape.dropout(h, self.p(), self.training, rng)?;
        gc_forward_rows(tape, adj, d, self.params[weights[1]], rows)
    }
}

/// Full forward pass producing every enabled head's output over all nodes.
pub fn forward_all(
    model: &MultiTaskModel,
    inputs: &GraphInputs,
    tape: &mut Tape,
    training: bool,
    streams: &mut DropoutStreams,
) -> Result<HeadOutputs> {
    forward(model, inputs, tape, training, streams, None)
}

/// Forward pass; with `aux_rows` set, the reconstruction heads only produce
/// those node rows (the class scores always cover every node).
pub fn forward(
    model: &MultiTaskModel,
    inputs: &GraphInputs,
    tape: &mut Tape,
    training: bool,
    streams: &mut DropoutStreams,
    aux_rows: Option<&[usize]>,
) -> Result<HeadOutputs> {
    let params: Vec<Var> = model.params.iter().map(|p| tape.param(p.value.clone())).collect();
    forward_with(model, &params, inputs, tape, training, streams, aux_rows)
}

/// [`forward`] over caller-supplied parameter values, one per
/// [`MultiTaskModel::parameters`] entry and of the same shapes.
pub fn forward_with(
    model: &MultiTaskModel,
    params: &[Var],
    inputs: &GraphInputs,
    tape: &mut Tape,
    training: bool,
    streams: &mut DropoutStreams,
    aux_rows: Option<&[usize]>,
) -> Result<HeadOutputs> {
    let arch = &model.arch;
    if params.len() != model.params.len()
        || params.iter().zip(&model.params).any(|(&v, p)| tape.value(v).dim() != p.value.dim())
    {
        return Err(invalid("parameter values do not match the model layout"));
    }
    arch.validate()?;
    if inputs.features.ncols() != arch.num_features {
        return Err(invalid(format!(
            "model expects {} features, inputs have {}",
            arch.num_features,
            inputs.features.ncols()
        )));
    }
    if let Some(&bad) = aux_rows.and_then(|r| r.iter().find(|&&i| i >= inputs.num_nodes())) {
        return Err(invalid(format!("node {bad} out of range")));
    }

    let params = params.to_vec();
    let pass = Pass {
        model,
        inputs,
        params: &params,
        training,
    };
    let layout = &model.layout;

    let h = pass.encode(tape, &inputs.sparse_features, &mut streams.encoder)?;
    let mut encoder_passes = 1;

    let d = tape.dropout(h, arch.dropout, training, &mut streams.main)?;
    let logits = gc_forward(tape, &inputs.adjacency, d, params[layout.main])?;
    let class_probs = tape.softmax_rows(logits)?;

    let ae = match layout.ae {
        Some(w) => Some(pass.decode(tape, w, h, &mut streams.ae, aux_rows)?),
        None => None,
    };

    let fr = match (layout.fr, arch.fr.as_ref()) {
        (Some(w), Some(spec)) => {
            let corrupted = Arc::new(inputs.sparse_features.zero_columns(&spec.zeroed_mask()));
            let hc = pass.encode(tape, &corrupted, &mut streams.encoder_fr)?;
            encoder_passes += 1;
            Some(pass.decode(tape, w, hc, &mut streams.fr, aux_rows)?)
        }
        _ => None,
    };

    let (er, er_target) = match (layout.er, arch.er.as_ref()) {
        (Some(w), Some(spec)) => {
            let corrupted = corrupt_embeddings(spec, tape, h)?;
            let out = pass.decode(tape, w, corrupted, &mut streams.er, aux_rows)?;
            let target = match arch.er_target {
                ErTarget::Coupled => h,
                ErTarget::Detached => {
                    let v = tape.value(h).clone();
                    tape.constant(v)
                }
            };
            (Some(out), Some(target))
        }
        _ => (None, None),
    };

    Ok(HeadOutputs {
        params,
        embeddings: h,
        class_probs,
        ae,
        fr,
        er,
        er_target,
        aux_rows: aux_rows.map(<[usize]>::to_vec),
        encoder_passes,
    })
}

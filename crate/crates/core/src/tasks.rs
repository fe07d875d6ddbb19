//! Empirical risks of the main and auxiliary tasks and their weighted sum.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{CorruptionSpec, ReconstructionMode};
use crate::tensor::{DenseMatrix, Tape, Var};

/// Static weights of the multi-task objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskWeights {
    pub main: f64,
    pub ae: f64,
    pub fr: f64,
    pub er: f64,
}

impl Default for TaskWeights {
    fn default() -> Self {
        Self {
            main: 1.0,
            ae: 0.0,
            fr: 0.0,
            er: 0.0,
        }
    }
}

impl TaskWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [("main", self.main), ("ae", self.ae), ("fr", self.fr), ("er", self.er)];
        for (name, w) in all {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("weight {name} = {w} must be finite and >= 0")));
            }
        }
        if self.main <= 0.0 {
            return Err(invalid("main task weight must be positive"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            main: self.main * factor,
            ae: self.ae * factor,
            fr: self.fr * factor,
            er: self.er * factor,
        }
    }
}

/// Node set the reconstruction risks are averaged over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexSetPolicy {
    /// The labeled nodes of the split being scored.
    #[default]
    LabeledOnly,
    AllNodes,
}

/// Per-task risk values on one tape. Absent tasks are disabled.
#[derive(Debug, Clone, Copy)]
pub struct TaskRisks {
    pub main: Var,
    pub ae: Option<Var>,
    pub fr: Option<Var>,
    pub er: Option<Var>,
}

/// Mean negative log-likelihood of the true class over `nodes`.
pub fn risk_main(tape: &mut Tape, probs: Var, labels: &[Option<usize>], nodes: &[usize]) -> Result<Var> {
    if nodes.is_empty() {
        return Err(invalid("main risk over an empty node set"));
    }
    let ys = nodes
        .iter()
        .map(|&n| {
            labels
                .get(n)
                .copied()
                .flatten()
                .ok_or_else(|| invalid(format!("node {n} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tape.nll_rows(probs, nodes, &ys)?)
}

/// Squared error between `recon` and rows of the constant `target`.
///
/// `recon` either covers every row of `target` (then `nodes` index into
/// both) or exactly the rows `nodes`, in that order.
fn reconstruction_risk(tape: &mut Tape, target: &DenseMatrix, recon: Var, nodes: &[usize]) -> Result<Var> {
    if nodes.is_empty() {
        return Err(invalid("reconstruction risk over an empty node set"));
    }
    let (rows, cols) = tape.value(recon).dim();
    if cols != target.ncols() {
        return Err(invalid(format!(
            "reconstruction has {cols} columns, target {}",
            target.ncols()
        )));
    }
    if rows == target.nrows() {
        let t = tape.constant(target.clone());
        Ok(tape.squared_error_rows(recon, t, nodes)?)
    } else if rows == nodes.len() {
        let t = tape.constant(target.select(ndarray::Axis(0), nodes));
        let all: Vec<usize> = (0..rows).collect();
        Ok(tape.squared_error_rows(recon, t, &all)?)
    } else {
        Err(invalid(format!(
            "reconstruction has {rows} rows; expected {} or {}",
            target.nrows(),
            nodes.len()
        )))
    }
}

/// `(1/|V|) Σ ‖xᵢ − x̂ᵢ‖²` over `nodes`.
pub fn risk_ae(tape: &mut Tape, features: &DenseMatrix, recon: Var, nodes: &[usize]) -> Result<Var> {
    reconstruction_risk(tape, features, recon, nodes)
}

/// Full mode: `‖xᵢ − x̂ᵢ‖²`. Partial mode: `‖I_M xᵢ − x̂ᵢ‖²`.
pub fn risk_fr(
    tape: &mut Tape,
    features: &DenseMatrix,
    recon: Var,
    spec: &CorruptionSpec,
    nodes: &[usize],
) -> Result<Var> {
    let width = tape.value(recon).ncols();
    if width != spec.output_dim() {
        return Err(invalid(format!(
            "{:?} feature reconstruction expects {} columns, got {width}",
            spec.mode(),
            spec.output_dim()
        )));
    }
    match spec.mode() {
        ReconstructionMode::Full => reconstruction_risk(tape, features, recon, nodes),
        ReconstructionMode::Partial => {
            let target = crate::model::select_columns(spec, features)?;
            reconstruction_risk(tape, &target, recon, nodes)
        }
    }
}

/// Embedding reconstruction against `target` (the clean encoding, detached
/// or not as the caller decided). Partial mode compares channels N only.
pub fn risk_er(
    tape: &mut Tape,
    target: Var,
    recon: Var,
    spec: &CorruptionSpec,
    nodes: &[usize],
) -> Result<Var> {
    if nodes.is_empty() {
        return Err(invalid("reconstruction risk over an empty node set"));
    }
    let width = tape.value(recon).ncols();
    if width != spec.output_dim() || tape.value(target).ncols() != spec.dim() {
        return Err(invalid(format!(
            "{:?} embedding reconstruction expects {} columns, got {width}",
            spec.mode(),
            spec.output_dim()
        )));
    }
    let target = match spec.mode() {
        ReconstructionMode::Full => target,
        ReconstructionMode::Partial => tape.select_columns(target, spec.indices())?,
    };
    let (rows, target_rows) = (tape.value(recon).nrows(), tape.value(target).nrows());
    if rows == target_rows {
        Ok(tape.squared_error_rows(recon, target, nodes)?)
    } else if rows == nodes.len() {
        let t = tape.gather_rows(target, nodes)?;
        let all: Vec<usize> = (0..rows).collect();
        Ok(tape.squared_error_rows(recon, t, &all)?)
    } else {
        Err(invalid(format!(
            "reconstruction has {rows} rows; expected {target_rows} or {}",
            nodes.len()
        )))
    }
}

/// `Σ w_t R_t` over the enabled tasks. Disabled tasks are left off the tape
/// entirely and so receive no gradient.
pub fn combine(tape: &mut Tape, risks: &TaskRisks, weights: &TaskWeights) -> Result<Var> {
    weights.validate()?;
    let mut terms = vec![(risks.main, weights.main)];
    for (risk, w) in [(risks.ae, weights.ae), (risks.fr, weights.fr), (risks.er, weights.er)] {
        if let Some(r) = risk {
            terms.push((r, w));
        }
    }
    Ok(tape.weighted_sum(&terms)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CorruptionKind;
    use crate::tensor::Rng;
    use ndarray::array;

    #[test]
    fn perfect_predictions_zero_risk() {
        let mut t = Tape::new();
        let z = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
        let r = risk_main(&mut t, z, &[Some(0), Some(1)], &[0, 1]).unwrap();
        assert_eq!(t.scalar(r), 0.0);
    }

    #[test]
    fn uniform_predictions_log_k() {
        let mut t = Tape::new();
        let z = t.constant(DenseMatrix::from_elem((4, 7), 1.0 / 7.0));
        let labels = vec![Some(0), Some(3), None, Some(6)];
        let r = risk_main(&mut t, z, &labels, &[0, 1, 3]).unwrap();
        assert!((t.scalar(r) - 1.945_910_149_055_313_3).abs() < 1e-12);
    }

    #[test]
    fn main_risk_brute_force() {
        let mut rng = Rng::new(5);
        let mut t = Tape::new();
        let raw = DenseMatrix::from_shape_fn((5, 3), |_| rng.uniform_range(-2.0, 2.0));
        let x = t.constant(raw);
        let z = t.softmax_rows(x).unwrap();
        let labels: Vec<Option<usize>> = vec![Some(0), Some(2), Some(1), Some(1), Some(0)];
        let nodes = [0, 1, 3, 4];
        let r = risk_main(&mut t, z, &labels, &nodes).unwrap();
        let probs = t.value(z);
        let mut oracle = 0.0;
        for &n in &nodes {
            oracle -= probs[[n, labels[n].unwrap()]].ln();
        }
        oracle /= nodes.len() as f64;
        assert!((t.scalar(r) - oracle).abs() < 1e-14);
    }

    #[test]
    fn unlabeled_main_node_rejected() {
        let mut t = Tape::new();
        let z = t.constant(DenseMatrix::from_elem((2, 2), 0.5));
        assert!(risk_main(&mut t, z, &[Some(0), None], &[0, 1]).is_err());
    }

    #[test]
    fn ae_hand_values() {
        let mut t = Tape::new();
        let x = array![[1.0, 2.0]];
        let same = t.constant(x.clone());
        let r = risk_ae(&mut t, &x, same, &[0]).unwrap();
        assert_eq!(t.scalar(r), 0.0);
        let zero = t.constant(array![[0.0, 0.0]]);
        let r = risk_ae(&mut t, &x, zero, &[0]).unwrap();
        assert_eq!(t.scalar(r), 5.0);
        let bad = t.constant(array![[0.0, 0.0, 0.0]]);
        assert!(risk_ae(&mut t, &x, bad, &[0]).is_err());
    }

    #[test]
    fn ae_restricted_rows_match_full() {
        let mut rng = Rng::new(2);
        let x = DenseMatrix::from_shape_fn((6, 3), |_| rng.uniform());
        let full = DenseMatrix::from_shape_fn((6, 3), |_| rng.uniform());
        let nodes = [4, 1, 5];
        let mut t = Tape::new();
        let a = t.constant(full.clone());
        let ra = risk_ae(&mut t, &x, a, &nodes).unwrap();
        let b = t.constant(full.select(ndarray::Axis(0), &nodes));
        let rb = risk_ae(&mut t, &x, b, &nodes).unwrap();
        assert!((t.scalar(ra) - t.scalar(rb)).abs() < 1e-15);
    }

    #[test]
    fn fr_partial_hand_value() {
        let spec = CorruptionSpec::new(
            CorruptionKind::Features,
            3,
            vec![2],
            ReconstructionMode::Partial,
        )
        .unwrap();
        let x = array![[1.0, 2.0, 3.0]];
        let mut t = Tape::new();
        let recon = t.constant(array![[0.0]]);
        let r = risk_fr(&mut t, &x, recon, &spec, &[0]).unwrap();
        assert_eq!(t.scalar(r), 9.0);
        let exact = t.constant(array![[3.0]]);
        let r = risk_fr(&mut t, &x, exact, &spec, &[0]).unwrap();
        assert_eq!(t.scalar(r), 0.0);
        let wrong = t.constant(array![[1.0, 2.0, 3.0]]);
        assert!(risk_fr(&mut t, &x, wrong, &spec, &[0]).is_err());
    }

    #[test]
    fn fr_full_dominates_partial_on_same_recon() {
        let mut rng = Rng::new(8);
        let x = DenseMatrix::from_shape_fn((4, 6), |_| rng.uniform());
        let recon = DenseMatrix::from_shape_fn((4, 6), |_| rng.uniform());
        let full = CorruptionSpec::new(CorruptionKind::Features, 6, vec![1, 4], ReconstructionMode::Full).unwrap();
        let part = CorruptionSpec::new(CorruptionKind::Features, 6, vec![1, 4], ReconstructionMode::Partial).unwrap();
        let mut t = Tape::new();
        let rf = t.constant(recon.clone());
        let full_risk = risk_fr(&mut t, &x, rf, &full, &[0, 1, 2, 3]).unwrap();
        let rp = t.constant(recon.select(ndarray::Axis(1), &[1, 4]));
        let part_risk = risk_fr(&mut t, &x, rp, &part, &[0, 1, 2, 3]).unwrap();
        let mut oracle_full = 0.0;
        let mut oracle_part = 0.0;
        for i in 0..4 {
            for j in 0..6 {
                let e = (x[[i, j]] - recon[[i, j]]).powi(2);
                oracle_full += e;
                if j == 1 || j == 4 {
                    oracle_part += e;
                }
            }
        }
        assert!((t.scalar(full_risk) - oracle_full / 4.0).abs() < 1e-14);
        assert!((t.scalar(part_risk) - oracle_part / 4.0).abs() < 1e-14);
        assert!(t.scalar(full_risk) >= t.scalar(part_risk));
    }

    #[test]
    fn er_partial_hand_value() {
        let spec = CorruptionSpec::new(
            CorruptionKind::Embeddings,
            2,
            vec![1],
            ReconstructionMode::Partial,
        )
        .unwrap();
        let mut t = Tape::new();
        let h = t.constant(array![[5.0, 2.0]]);
        let recon = t.constant(array![[0.0]]);
        let r = risk_er(&mut t, h, recon, &spec, &[0]).unwrap();
        assert_eq!(t.scalar(r), 4.0);
    }

    #[test]
    fn combine_values_and_linearity() {
        let mut t = Tape::new();
        let main = t.constant(array![[0.7]]);
        let ae = t.constant(array![[0.2]]);
        let fr = t.constant(array![[3.0]]);
        let risks = TaskRisks {
            main,
            ae: Some(ae),
            fr: Some(fr),
            er: None,
        };
        let w = TaskWeights {
            main: 1.0,
            ae: 0.5,
            fr: 0.0,
            er: 0.0,
        };
        let c = combine(&mut t, &risks, &w).unwrap();
        assert!((t.scalar(c) - 0.8).abs() < 1e-15);
        let c2 = combine(&mut t, &risks, &w.scaled(2.0)).unwrap();
        assert_eq!(t.scalar(c2), 2.0 * t.scalar(c));
        let only_main = combine(&mut t, &risks, &TaskWeights::default()).unwrap();
        assert_eq!(t.scalar(only_main), 0.7);
        let neg = TaskWeights { ae: -1.0, ..w };
        assert!(combine(&mut t, &risks, &neg).is_err());
    }
}

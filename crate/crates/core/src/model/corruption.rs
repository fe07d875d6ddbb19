use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::{DenseMatrix, Rng, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Features,
    Embeddings,
}

/// Whether a reconstruction head decodes every coordinate or only the
/// corrupted ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructionMode {
    Full,
    Partial,
}

/// Index set of zeroed coordinates (feature columns or embedding channels)
/// together with the reconstruction mode of the head that undoes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    kind: CorruptionKind,
    dim: usize,
    indices: Vec<usize>,
    mode: ReconstructionMode,
}

impl CorruptionSpec {
    /// `indices` must be non-empty, in `0..dim` and free of duplicates. For
    /// embeddings at least one channel must survive.
    pub fn new(
        kind: CorruptionKind,
        dim: usize,
        mut indices: Vec<usize>,
        mode: ReconstructionMode,
    ) -> Result<Self> {
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(invalid("corruption index set must not be empty"));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("corruption index set has duplicates"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(invalid(format!("corruption index {bad} out of range (< {dim})")));
        }
        if kind == CorruptionKind::Embeddings && indices.len() >= dim {
            return Err(invalid(format!(
                "corrupting {} of {dim} embedding channels leaves nothing to condition on",
                indices.len()
            )));
        }
        Ok(Self {
            kind,
            dim,
            indices,
            mode,
        })
    }

    /// Draws `count` indices uniformly without replacement.
    pub fn sample(
        kind: CorruptionKind,
        dim: usize,
        count: usize,
        mode: ReconstructionMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        if count == 0 || count > dim {
            return Err(invalid(format!("cannot corrupt {count} of {dim} coordinates")));
        }
        Self::new(kind, dim, rng.sample_indices(dim, count), mode)
    }

    pub fn kind(&self) -> CorruptionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mode(&self) -> ReconstructionMode {
        self.mode
    }

    /// Width of the reconstruction target.
    pub fn output_dim(&self) -> usize {
        match self.mode {
            ReconstructionMode::Full => self.dim,
            ReconstructionMode::Partial => self.indices.len(),
        }
    }

    /// `true` at every corrupted coordinate.
    pub fn zeroed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dim];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }

    fn expect(&self, kind: CorruptionKind, cols: usize) -> Result<()> {
        if self.kind != kind {
            return Err(invalid(format!("expected a {kind:?} corruption, got {:?}", self.kind)));
        }
        if cols != self.dim {
            return Err(invalid(format!(
                "corruption built for {} coordinates applied to {cols}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Zeroes the feature columns in M, row-wise `x ↦ P_M x`.
pub fn corrupt_features(spec: &CorruptionSpec, x: &DenseMatrix) -> Result<DenseMatrix> {
    spec.expect(CorruptionKind::Features, x.ncols())?;
    let mut out = x.clone();
    for &j in spec.indices() {
        out.column_mut(j).fill(0.0);
    }
    Ok(out)
}

/// Keeps only the columns in M, in ascending order, row-wise `x ↦ I_M x`.
pub fn select_columns(spec: &CorruptionSpec, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.ncols() != spec.dim() {
        return Err(invalid(format!(
            "corruption built for {} coordinates applied to {}",
            spec.dim(),
            x.ncols()
        )));
    }
    Ok(x.select(ndarray::Axis(1), spec.indices()))
}

/// Zeroes the embedding channels in N; gradients through them are zero.
pub fn corrupt_embeddings(spec: &CorruptionSpec, tape: &mut Tape, h: Var) -> Result<Var> {
    spec.expect(CorruptionKind::Embeddings, tape.value(h).ncols())?;
    Ok(tape.mask_columns(h, &spec.zeroed_mask())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use crate::tensor::Rng;

    fn feat(dim: usize, idx: &[usize], mode: ReconstructionMode) -> CorruptionSpec {
        CorruptionSpec::new(CorruptionKind::Features, dim, idx.to_vec(), mode).unwrap()
    }

    #[test]
    fn corrupt_and_select_rows() {
        let s = feat(4, &[3, 1], ReconstructionMode::Partial);
        let x = array![[1.0, 2.0, 3.0, 4.0]];
        assert_eq!(corrupt_features(&s, &x).unwrap(), array![[1.0, 0.0, 3.0, 0.0]]);
        assert_eq!(select_columns(&s, &x).unwrap(), array![[2.0, 4.0]]);
        assert_eq!(s.output_dim(), 2);
    }

    #[test]
    fn all_columns() {
        let s = feat(3, &[0, 1, 2], ReconstructionMode::Full);
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert!(corrupt_features(&s, &x).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(select_columns(&s, &x).unwrap(), x);
    }

    #[test]
    fn invalid_sets() {
        use CorruptionKind::*;
        use ReconstructionMode::Full;
        assert!(CorruptionSpec::new(Features, 4, vec![], Full).is_err());
        assert!(CorruptionSpec::new(Features, 4, vec![4], Full).is_err());
        assert!(CorruptionSpec::new(Features, 4, vec![1, 1], Full).is_err());
        assert!(CorruptionSpec::new(Embeddings, 2, vec![0, 1], Full).is_err());
        let s = feat(4, &[1], Full);
        assert!(corrupt_features(&s, &DenseMatrix::zeros((2, 5))).is_err());
    }

    #[test]
    fn embedding_corruption_and_gradient() {
        let s = CorruptionSpec::new(
            CorruptionKind::Embeddings,
            2,
            vec![0],
            ReconstructionMode::Full,
        )
        .unwrap();
        let mut t = Tape::new();
        let h = t.param(DenseMatrix::ones((2, 2)));
        let c = corrupt_embeddings(&s, &mut t, h).unwrap();
        assert_eq!(t.value(c), &array![[0.0, 1.0], [0.0, 1.0]]);
        let w = t.constant(array![[3.0, -2.0], [0.5, 7.0]]);
        let prod = t.weighted_sum(&[(c, 1.0)]).unwrap();
        let masked = t.squared_error_rows(prod, w, &[0, 1]).unwrap();
        t.backward(masked).unwrap();
        let g = t.grad(h).unwrap();
        assert_eq!(g.column(0).to_vec(), vec![0.0, 0.0]);
        assert!(g.column(1).iter().all(|&v| v != 0.0));
    }

    #[test]
    fn sampling_is_seeded() {
        let a = CorruptionSpec::sample(
            CorruptionKind::Features,
            100,
            10,
            ReconstructionMode::Full,
            &mut Rng::new(4),
        )
        .unwrap();
        let b = CorruptionSpec::sample(
            CorruptionKind::Features,
            100,
            10,
            ReconstructionMode::Full,
            &mut Rng::new(4),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices().len(), 10);
    }

    proptest! {
        #[test]
        fn projection_algebra(d in 1usize..=64, seed in any::<u64>(), frac in 0.0f64..1.0) {
            let mut rng = Rng::new(seed);
            let count = 1 + ((d - 1) as f64 * frac) as usize;
            let spec = CorruptionSpec::sample(CorruptionKind::Features, d, count, ReconstructionMode::Partial, &mut rng).unwrap();
            let x = DenseMatrix::from_shape_fn((5, d), |_| rng.uniform_range(-2.0, 2.0));
            let p = corrupt_features(&spec, &x).unwrap();
            prop_assert_eq!(&corrupt_features(&spec, &p).unwrap(), &p);
            prop_assert!(select_columns(&spec, &p).unwrap().iter().all(|&v| v == 0.0));
            let complement = &x - &p;
            prop_assert_eq!(select_columns(&spec, &complement).unwrap(), select_columns(&spec, &x).unwrap());
        }
    }
}

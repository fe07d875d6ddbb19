use std::sync::Arc;

use super::GraphError;
use crate::tensor::{CsrMatrix, DenseMatrix};

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, with `D̃` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormalizedAdjacency {
    matrix: Arc<CsrMatrix>,
}

impl RenormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<CsrMatrix> {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }
}

/// Builds the renormalized adjacency. The stored pattern of the result is
/// exactly the pattern of `A + I`.
pub fn renormalize(adjacency: &CsrMatrix) -> Result<RenormalizedAdjacency, GraphError> {
    let (n, m) = adjacency.shape();
    if n != m {
        return Err(GraphError::NotSquare((n, m)));
    }
    let mut degree = vec![1.0; n];
    for (i, j, w) in adjacency.triplets() {
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if w < 0.0 {
            return Err(GraphError::NegativeWeight {
                row: i,
                col: j,
                weight: w,
            });
        }
        if adjacency.get(j, i) != w {
            return Err(GraphError::Asymmetric { row: i, col: j });
        }
        degree[i] += w;
    }
    let triplets = adjacency
        .triplets()
        .chain((0..n).map(|i| (i, i, 1.0)))
        .map(|(i, j, w)| (i, j, w / (degree[i] * degree[j]).sqrt()));
    let matrix = CsrMatrix::from_triplets(n, n, triplets).expect("indices in range");
    Ok(RenormalizedAdjacency {
        matrix: Arc::new(matrix),
    })
}

/// Divides each nonzero row by its L1 norm; zero rows are left alone.
pub fn row_normalize_features(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm: f64 = row.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

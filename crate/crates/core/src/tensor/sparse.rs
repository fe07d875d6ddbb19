use super::{DenseMatrix, Result, Rng, TensorError};

/// Row-compressed sparse matrix.
///
/// Column indices are strictly increasing within each row and no explicit
/// zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are
    /// summed; entries that end up zero are dropped.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows {
                return Err(TensorError::IndexOutOfRange {
                    what: "row",
                    index: r,
                    len: rows,
                });
            }
            if c >= cols {
                return Err(TensorError::IndexOutOfRange {
                    what: "column",
                    index: c,
                    len: cols,
                });
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                row_of.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((c, v), r) in indices.into_iter().zip(values).zip(row_of) {
            if v != 0.0 {
                keep_idx.push(c);
                keep_val.push(v);
                indptr[r + 1] += 1;
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices: keep_idx,
            values: keep_val,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let (rows, cols) = m.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        Self::from_triplets(self.cols, self.rows, triplets).expect("transpose indices in range")
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// `self · dense`, cost proportional to `nnz · dense.cols`.
    pub fn mul_dense(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != dense.nrows() {
            return Err(TensorError::DimensionMismatch {
                op: "spmm",
                lhs: self.shape(),
                rhs: dense.dim(),
            });
        }
        let k = dense.ncols();
        let src = dense.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.rows * k];
        for (i, dst) in out.chunks_exact_mut(k.max(1)).take(self.rows).enumerate() {
            for (j, v) in self.row(i) {
                let s = &src[j * k..(j + 1) * k];
                for (d, x) in dst.iter_mut().zip(s) {
                    *d += v * x;
                }
            }
        }
        Ok(DenseMatrix::from_shape_vec((self.rows, k), out).expect("shape"))
    }

    /// `selfᵀ · dense` without materializing the transpose.
    pub fn transpose_mul_dense(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != dense.nrows() {
            return Err(TensorError::DimensionMismatch {
                op: "spmm_transpose",
                lhs: (self.cols, self.rows),
                rhs: dense.dim(),
            });
        }
        let k = dense.ncols();
        let src = dense.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.cols * k];
        for i in 0..self.rows {
            let s = &src[i * k..(i + 1) * k];
            for (j, v) in self.row(i) {
                let dst = &mut out[j * k..(j + 1) * k];
                for (d, x) in dst.iter_mut().zip(s) {
                    *d += v * x;
                }
            }
        }
        Ok(DenseMatrix::from_shape_vec((self.cols, k), out).expect("shape"))
    }

    /// Copy with the flagged columns removed from the stored pattern.
    pub fn zero_columns(&self, zeroed: &[bool]) -> Self {
        assert_eq!(zeroed.len(), self.cols, "column mask length");
        self.filter_map(|_, j, v| (!zeroed[j]).then_some(v))
    }

    /// Inverted dropout over the stored entries. Implicit zeros stay zero
    /// whatever the mask says, so dropping only stored entries has the same
    /// distribution as dense dropout.
    pub fn dropout(&self, p: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let scale = 1.0 / (1.0 - p);
        Ok(self.filter_map(|_, _, v| (rng.uniform() >= p).then_some(v * scale)))
    }

    /// Rebuilds the matrix keeping the entries for which `f` returns a
    /// nonzero value. Visits entries in row-major order.
    pub fn filter_map<F>(&self, mut f: F) -> Self
    where
        F: FnMut(usize, usize, f64) -> Option<f64>,
    {
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        indptr.push(0);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                if let Some(nv) = f(i, j, v) {
                    if nv != 0.0 {
                        indices.push(j);
                        values.push(nv);
                    }
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }

    /// Iterates all stored `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

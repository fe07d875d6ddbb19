use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Axis, Zip};

use super::{check_finite, shape, CsrMatrix, DenseMatrix, Result, Rng, TensorError};

/// Probabilities below this are clamped before taking the log in
/// [`Tape::nll_rows`].
pub const LOG_CLAMP: f64 = 1e-12;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Spmm { lhs: Arc<CsrMatrix>, rhs: usize },
    Matmul { lhs: usize, rhs: usize },
    Relu { input: usize },
    SoftmaxRows { input: usize },
    Dropout { input: usize, mask: DenseMatrix },
    MaskColumns { input: usize, keep: Vec<bool> },
    SelectColumns { input: usize, cols: Vec<usize> },
    GatherRows { input: usize, rows: Vec<usize> },
    NllRows { probs: usize, rows: Vec<usize>, labels: Vec<usize> },
    SquaredErrorRows { pred: usize, target: usize, rows: Vec<usize> },
    SumSquares { input: usize },
    Sum { input: usize },
    Scale { input: usize, factor: f64 },
    WeightedSum { terms: Vec<(usize, f64)> },
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    requires_grad: bool,
    op: Op,
}

/// Records a forward pass and replays it in reverse.
///
/// A tape is single-use: [`Tape::backward`] consumes it, and a second call
/// fails with [`TensorError::TapeConsumed`]. Values stay readable afterwards.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<DenseMatrix>>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient on backward.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[self.index(v).expect("foreign value")].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.index(v).expect("foreign value")].requires_grad
    }

    /// Gradient of the last backward pass, if `v` requires one.
    pub fn grad(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(self.index(v).ok()?)?.as_ref()
    }

    /// Scalar payload of a 1x1 value.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "not a scalar");
        m[[0, 0]]
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignValue);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: DenseMatrix, requires_grad: bool, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn push_checked(
        &mut self,
        name: &'static str,
        value: DenseMatrix,
        inputs: &[usize],
        op: Op,
    ) -> Result<Var> {
        check_finite(&value, name)?;
        let rg = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push(value, rg, op))
    }

    /// Sparse-dense product `lhs · rhs`.
    pub fn spmm(&mut self, lhs: &Arc<CsrMatrix>, rhs: Var) -> Result<Var> {
        let r = self.index(rhs)?;
        let value = lhs.mul_dense(&self.nodes[r].value)?;
        self.push_checked(
            "spmm",
            value,
            &[r],
            Op::Spmm {
                lhs: Arc::clone(lhs),
                rhs: r,
            },
        )
    }

    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.index(lhs)?, self.index(rhs)?);
        let (sa, sb) = (shape(&self.nodes[a].value), shape(&self.nodes[b].value));
        if sa.1 != sb.0 {
            return Err(TensorError::DimensionMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let value = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push_checked("matmul", value, &[a, b], Op::Matmul { lhs: a, rhs: b })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let i = self.index(x)?;
        let value = self.nodes[i].value.mapv(|v| v.max(0.0));
        self.push_checked("relu", value, &[i], Op::Relu { input: i })
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let i = self.index(x)?;
        let mut value = self.nodes[i].value.clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push_checked("softmax_rows", value, &[i], Op::SoftmaxRows { input: i })
    }

    /// Inverted dropout: entries zeroed with probability `p`, survivors
    /// scaled by `1 / (1 - p)`. Identity when not training or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        let i = self.index(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let mask = self.nodes[i]
            .value
            .mapv(|_| if rng.uniform() >= p { scale } else { 0.0 });
        let value = &self.nodes[i].value * &mask;
        self.push_checked("dropout", value, &[i], Op::Dropout { input: i, mask })
    }

    /// Zeroes every column whose flag in `zeroed` is set.
    pub fn mask_columns(&mut self, x: Var, zeroed: &[bool]) -> Result<Var> {
        let i = self.index(x)?;
        let s = shape(&self.nodes[i].value);
        if zeroed.len() != s.1 {
            return Err(TensorError::DimensionMismatch {
                op: "mask_columns",
                lhs: s,
                rhs: (1, zeroed.len()),
            });
        }
        let keep: Vec<bool> = zeroed.iter().map(|z| !z).collect();
        let mut value = self.nodes[i].value.clone();
        for (j, mut col) in value.axis_iter_mut(Axis(1)).enumerate() {
            if !keep[j] {
                col.fill(0.0);
            }
        }
        self.push_checked("mask_columns", value, &[i], Op::MaskColumns { input: i, keep })
    }

    /// Columns `cols` of `x`, in the given order.
    pub fn select_columns(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let i = self.index(x)?;
        let n = self.nodes[i].value.ncols();
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(TensorError::IndexOutOfRange {
                what: "column",
                index: bad,
                len: n,
            });
        }
        let value = self.nodes[i].value.select(Axis(1), cols);
        self.push_checked(
            "select_columns",
            value,
            &[i],
            Op::SelectColumns {
                input: i,
                cols: cols.to_vec(),
            },
        )
    }

    /// Rows `rows` of `x`, in the given order.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let i = self.index(x)?;
        let n = self.nodes[i].value.nrows();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(TensorError::IndexOutOfRange {
                what: "row",
                index: bad,
                len: n,
            });
        }
        let value = self.nodes[i].value.select(Axis(0), rows);
        self.push_checked(
            "gather_rows",
            value,
            &[i],
            Op::GatherRows {
                input: i,
                rows: rows.to_vec(),
            },
        )
    }

    /// Mean over `rows` of `-ln(max(probs[r, labels[k]], LOG_CLAMP))`.
    pub fn nll_rows(&mut self, probs: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        let p = self.index(probs)?;
        let (n, k) = shape(&self.nodes[p].value);
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(TensorError::DimensionMismatch {
                op: "nll_rows",
                lhs: (rows.len(), 1),
                rhs: (labels.len(), 1),
            });
        }
        for (&r, &y) in rows.iter().zip(labels) {
            if r >= n {
                return Err(TensorError::IndexOutOfRange {
                    what: "row",
                    index: r,
                    len: n,
                });
            }
            if y >= k {
                return Err(TensorError::IndexOutOfRange {
                    what: "class",
                    index: y,
                    len: k,
                });
            }
        }
        let z = &self.nodes[p].value;
        let total: f64 = rows
            .iter()
            .zip(labels)
            .map(|(&r, &y)| -z[[r, y]].max(LOG_CLAMP).ln())
            .sum();
        let value = DenseMatrix::from_elem((1, 1), total / rows.len() as f64);
        self.push_checked(
            "nll_rows",
            value,
            &[p],
            Op::NllRows {
                probs: p,
                rows: rows.to_vec(),
                labels: labels.to_vec(),
            },
        )
    }

    /// Mean over `rows` of the squared L2 distance between rows of `pred`
    /// and `target`. `target` may be a constant or a differentiable value.
    pub fn squared_error_rows(&mut self, pred: Var, target: Var, rows: &[usize]) -> Result<Var> {
        let (a, b) = (self.index(pred)?, self.index(target)?);
        let (sa, sb) = (shape(&self.nodes[a].value), shape(&self.nodes[b].value));
        if sa != sb || rows.is_empty() {
            return Err(TensorError::DimensionMismatch {
                op: "squared_error_rows",
                lhs: sa,
                rhs: sb,
            });
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= sa.0) {
            return Err(TensorError::IndexOutOfRange {
                what: "row",
                index: bad,
                len: sa.0,
            });
        }
        let (x, t) = (&self.nodes[a].value, &self.nodes[b].value);
        let mut total = 0.0;
        for &r in rows {
            total += x
                .row(r)
                .iter()
                .zip(t.row(r))
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>();
        }
        let value = DenseMatrix::from_elem((1, 1), total / rows.len() as f64);
        self.push_checked(
            "squared_error_rows",
            value,
            &[a, b],
            Op::SquaredErrorRows {
                pred: a,
                target: b,
                rows: rows.to_vec(),
            },
        )
    }

    /// Squared Frobenius norm as a 1x1 value.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let i = self.index(x)?;
        let s = self.nodes[i].value.iter().map(|v| v * v).sum::<f64>();
        self.push_checked(
            "sum_squares",
            DenseMatrix::from_elem((1, 1), s),
            &[i],
            Op::SumSquares { input: i },
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let i = self.index(x)?;
        let s = self.nodes[i].value.sum();
        self.push_checked("sum", DenseMatrix::from_elem((1, 1), s), &[i], Op::Sum { input: i })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let i = self.index(x)?;
        let value = &self.nodes[i].value * factor;
        self.push_checked("scale", value, &[i], Op::Scale { input: i, factor })
    }

    /// `Σ wₖ·xₖ` over same-shaped values. Inputs not listed get no gradient.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut idx = Vec::with_capacity(terms.len());
        for &(v, w) in terms {
            idx.push((self.index(v)?, w));
        }
        let Some(&(first, _)) = idx.first() else {
            return Ok(self.constant(DenseMatrix::zeros((1, 1))));
        };
        let s0 = shape(&self.nodes[first].value);
        let mut value = DenseMatrix::zeros(s0);
        for &(i, w) in &idx {
            let s = shape(&self.nodes[i].value);
            if s != s0 {
                return Err(TensorError::DimensionMismatch {
                    op: "weighted_sum",
                    lhs: s0,
                    rhs: s,
                });
            }
            value.scaled_add(w, &self.nodes[i].value);
        }
        let inputs: Vec<usize> = idx.iter().map(|t| t.0).collect();
        self.push_checked("weighted_sum", value, &inputs, Op::WeightedSum { terms: idx })
    }

    /// Reverse sweep from the scalar `loss`. Populates gradients for every
    /// value that requires one and marks the tape consumed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let l = self.index(loss)?;
        let s = shape(&self.nodes[l].value);
        if s != (1, 1) {
            return Err(TensorError::NonScalarLoss(s));
        }
        self.consumed = true;

        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        if self.nodes[l].requires_grad {
            grads[l] = Some(DenseMatrix::ones((1, 1)));
        }
        for id in (0..=l).rev() {
            let Some(up) = grads[id].take() else { continue };
            self.propagate(id, &up, &mut grads)?;
            grads[id] = Some(up);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !self.nodes[i].requires_grad {
                    continue;
                }
                check_finite(g, "backward")?;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, up: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Spmm { lhs, rhs } => {
                if self.nodes[*rhs].requires_grad {
                    let g = lhs.transpose_mul_dense(up)?;
                    self.accumulate(grads, *rhs, g);
                }
            }
            Op::Matmul { lhs, rhs } => {
                if self.nodes[*lhs].requires_grad {
                    let g = up.dot(&self.nodes[*rhs].value.t());
                    self.accumulate(grads, *lhs, g);
                }
                if self.nodes[*rhs].requires_grad {
                    let g = self.nodes[*lhs].value.t().dot(up);
                    self.accumulate(grads, *rhs, g);
                }
            }
            Op::Relu { input } => {
                let mut g = up.clone();
                Zip::from(&mut g)
                    .and(&self.nodes[*input].value)
                    .for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    });
                self.accumulate(grads, *input, g);
            }
            Op::SoftmaxRows { input } => {
                let y = &node.value;
                let mut g = DenseMatrix::zeros(y.dim());
                for ((mut gr, yr), ur) in g.rows_mut().into_iter().zip(y.rows()).zip(up.rows()) {
                    let dot: f64 = yr.iter().zip(ur.iter()).map(|(a, b)| a * b).sum();
                    Zip::from(&mut gr)
                        .and(&yr)
                        .and(&ur)
                        .for_each(|g, &y, &u| *g = y * (u - dot));
                }
                self.accumulate(grads, *input, g);
            }
            Op::Dropout { input, mask } => {
                self.accumulate(grads, *input, up * mask);
            }
            Op::MaskColumns { input, keep } => {
                let mut g = up.clone();
                for (j, mut col) in g.axis_iter_mut(Axis(1)).enumerate() {
                    if !keep[j] {
                        col.fill(0.0);
                    }
                }
                self.accumulate(grads, *input, g);
            }
            Op::SelectColumns { input, cols } => {
                let mut g = DenseMatrix::zeros(self.nodes[*input].value.dim());
                for (k, &c) in cols.iter().enumerate() {
                    let mut dst = g.column_mut(c);
                    dst += &up.column(k);
                }
                self.accumulate(grads, *input, g);
            }
            Op::GatherRows { input, rows } => {
                let mut g = DenseMatrix::zeros(self.nodes[*input].value.dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dst = g.row_mut(r);
                    dst += &up.row(k);
                }
                self.accumulate(grads, *input, g);
            }
            Op::NllRows {
                probs,
                rows,
                labels,
            } => {
                let z = &self.nodes[*probs].value;
                let scale = up[[0, 0]] / rows.len() as f64;
                let mut g = DenseMatrix::zeros(z.dim());
                for (&r, &y) in rows.iter().zip(labels) {
                    let p = z[[r, y]];
                    if p >= LOG_CLAMP {
                        g[[r, y]] -= scale / p;
                    }
                }
                self.accumulate(grads, *probs, g);
            }
            Op::SquaredErrorRows { pred, target, rows } => {
                let (x, t) = (&self.nodes[*pred].value, &self.nodes[*target].value);
                let scale = 2.0 * up[[0, 0]] / rows.len() as f64;
                let mut g = DenseMatrix::zeros(x.dim());
                for &r in rows {
                    Zip::from(g.row_mut(r))
                        .and(x.row(r))
                        .and(t.row(r))
                        .for_each(|g, &p, &q| *g += scale * (p - q));
                }
                if self.nodes[*target].requires_grad {
                    self.accumulate(grads, *target, -&g);
                }
                self.accumulate(grads, *pred, g);
            }
            Op::SumSquares { input } => {
                let g = &self.nodes[*input].value * (2.0 * up[[0, 0]]);
                self.accumulate(grads, *input, g);
            }
            Op::Sum { input } => {
                let g = DenseMatrix::from_elem(self.nodes[*input].value.dim(), up[[0, 0]]);
                self.accumulate(grads, *input, g);
            }
            Op::Scale { input, factor } => {
                self.accumulate(grads, *input, up * *factor);
            }
            Op::WeightedSum { terms } => {
                for &(i, w) in terms {
                    self.accumulate(grads, i, up * w);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], idx: usize, g: DenseMatrix) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        match &mut grads[idx] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_hand_arithmetic() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = t.constant(array![[1.0], [1.0]]);
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &array![[3.0], [7.0]]);
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let m = array![[1.5, -2.0, 0.25], [3.0, 4.0, 1.0]];
        let a = t.constant(m.clone());
        let i = t.constant(DenseMatrix::eye(3));
        let c = t.matmul(a, i).unwrap();
        assert_eq!(t.value(c), &m);
    }

    #[test]
    fn matmul_mismatch_is_error() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::zeros((2, 3)));
        let b = t.constant(DenseMatrix::zeros((2, 3)));
        assert!(matches!(t.matmul(a, b), Err(TensorError::DimensionMismatch { .. })));
    }

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(array![[-1.0, 2.0, 0.0]]);
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y), &array![[0.0, 2.0, 0.0]]);
        let p = t.constant(array![[0.5, 2.0], [3.0, 1e-3]]);
        let q = t.relu(p).unwrap();
        assert_eq!(t.value(q), t.value(p));
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let mut t = Tape::new();
        let x = t.constant(array![[0.0, 0.0], [1000.0, 0.0]]);
        let y = t.softmax_rows(x).unwrap();
        let v = t.value(y);
        assert_eq!(v[[0, 0]], 0.5);
        assert_eq!(v[[0, 1]], 0.5);
        assert!((v[[1, 0]] - 1.0).abs() < 1e-12);
        assert!(v[[1, 1]] < 1e-300);
    }

    #[test]
    fn dropout_identity_paths() {
        let mut t = Tape::new();
        let mut rng = Rng::new(0);
        let x = t.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(t.dropout(x, 0.5, false, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(
            t.dropout(x, 1.0, true, &mut rng),
            Err(TensorError::InvalidProbability(1.0))
        );
        assert!(t.dropout(x, -0.1, false, &mut rng).is_err());
    }

    #[test]
    fn dropout_monte_carlo_mean() {
        let mut t = Tape::new();
        let mut rng = Rng::new(11);
        let x = t.constant(DenseMatrix::ones((100, 1000)));
        let y = t.dropout(x, 0.5, true, &mut rng).unwrap();
        let mean = t.value(y).mean().unwrap();
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    }

    #[test]
    fn dropout_same_seed_same_mask() {
        let run = |seed| {
            let mut t = Tape::new();
            let mut rng = Rng::new(seed);
            let x = t.constant(DenseMatrix::ones((20, 20)));
            let y = t.dropout(x, 0.5, true, &mut rng).unwrap();
            let z = t.dropout(x, 0.5, true, &mut rng).unwrap();
            (t.value(y).clone(), t.value(z).clone())
        };
        let (a1, b1) = run(5);
        let (a2, b2) = run(5);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_ne!(a1, b1);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let w = t.param(array![[1.0, -2.0], [0.5, 3.0]]);
        let l = t.sum(w).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(w).unwrap(), &DenseMatrix::ones((2, 2)));
    }

    #[test]
    fn zero_scaled_loss_gives_zero_grad() {
        let mut t = Tape::new();
        let w = t.param(array![[1.0, -2.0], [0.5, 3.0]]);
        let s = t.sum_squares(w).unwrap();
        let l = t.scale(s, 0.0).unwrap();
        t.backward(l).unwrap();
        assert!(t.grad(w).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar_and_double_use() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::ones((2, 2)));
        assert_eq!(t.backward(w), Err(TensorError::NonScalarLoss((2, 2))));
        let l = t.sum(w).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.backward(l), Err(TensorError::TapeConsumed));
    }

    #[test]
    fn foreign_values_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.constant(DenseMatrix::ones((1, 1)));
        assert_eq!(b.relu(x), Err(TensorError::ForeignValue));
    }

    #[test]
    fn nll_uniform_is_log_k() {
        let mut t = Tape::new();
        let z = t.constant(DenseMatrix::from_elem((3, 7), 1.0 / 7.0));
        let l = t.nll_rows(z, &[0, 2], &[3, 6]).unwrap();
        assert!((t.scalar(l) - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn squared_error_hand_value() {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0, 2.0]]);
        let y = t.param(array![[0.0, 0.0]]);
        let l = t.squared_error_rows(y, x, &[0]).unwrap();
        assert_eq!(t.scalar(l), 5.0);
        t.backward(l).unwrap();
        assert_eq!(t.grad(y).unwrap(), &array![[-2.0, -4.0]]);
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn weighted_sum_skips_unlisted_inputs() {
        let mut t = Tape::new();
        let a = t.param(array![[0.7]]);
        let b = t.param(array![[0.2]]);
        let c = t.param(array![[9.0]]);
        let l = t.weighted_sum(&[(a, 1.0), (b, 0.5)]).unwrap();
        assert!((t.scalar(l) - 0.8).abs() < 1e-15);
        t.backward(l).unwrap();
        assert_eq!(t.grad(b).unwrap()[[0, 0]], 0.5);
        assert!(t.grad(c).is_none());
    }

    #[test]
    fn non_finite_output_rejected() {
        let mut t = Tape::new();
        let x = t.constant(array![[f64::MAX]]);
        assert!(matches!(t.scale(x, 10.0), Err(TensorError::NonFinite { .. })));
    }
}

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, TensorError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for a fixed list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    step: u64,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl OptimizerState {
    /// Zero moments shaped like `shapes`.
    pub fn new(lr: f64, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let m: Vec<DenseMatrix> = shapes.into_iter().map(DenseMatrix::zeros).collect();
        Self {
            lr,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Fails without touching anything if a gradient is non-finite or the
    /// shapes disagree with the moments.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut DenseMatrix>,
        grads: &[DenseMatrix],
    ) -> Result<()> {
        let params: Vec<&mut DenseMatrix> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Invalid(format!(
                "optimizer tracks {} blocks, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (g, m)) in grads.iter().zip(&self.m).enumerate() {
            if g.dim() != m.dim() || params[k].dim() != m.dim() {
                return Err(Error::Invalid(format!("block {k}: shape does not match moments")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TensorError::NonFinite { op: "adam_step gradient" }.into());
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let lr = self.lr;
        for ((theta, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            ndarray::Zip::from(theta)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|theta, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                });
        }
        Ok(())
    }
}

use super::{DenseMatrix, Result, Tape, TensorError, Var};

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` builds a scalar loss on the tape it is handed from the parameter
/// leaves it receives. It must be deterministic: the unperturbed objective is
/// evaluated twice and any bitwise difference is reported as
/// [`TensorError::NonDeterministic`].
///
/// The per-entry error is `|a - n| / (|a| + |n| + 1e-12)`; the maximum over
/// all entries of all parameters is returned.
pub fn finite_diff_check<F>(mut f: F, params: &[DenseMatrix], eps: f64) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(TensorError::InvalidStep(eps));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let base = tape.scalar(loss);
    tape.backward(loss)?;
    let analytic: Vec<DenseMatrix> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(|g| g.as_standard_layout().into_owned())
                .unwrap_or_else(|| DenseMatrix::zeros(p.dim()))
        })
        .collect();

    let mut eval = |values: &[DenseMatrix]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|p| t.constant(p.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.scalar(l))
    };

    let again = eval(params)?;
    if again.to_bits() != base.to_bits() {
        return Err(TensorError::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let mut work: Vec<DenseMatrix> = params.iter().map(|p| p.as_standard_layout().into_owned()).collect();
    let mut best = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for pi in 0..work.len() {
        let len = work[pi].len();
        for k in 0..len {
            let orig = flat(&work[pi])[k];
            flat_mut(&mut work[pi])[k] = orig + eps;
            let plus = eval(&work)?;
            flat_mut(&mut work[pi])[k] = orig - eps;
            let minus = eval(&work)?;
            flat_mut(&mut work[pi])[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = flat(&analytic[pi])[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            if rel > best.max_rel_error {
                best = GradCheck {
                    max_rel_error: rel,
                    worst: (pi, k),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(best)
}

fn flat(m: &DenseMatrix) -> &[f64] {
    m.as_slice().expect("parameters must be in standard layout")
}

fn flat_mut(m: &mut DenseMatrix) -> &mut [f64] {
    m.as_slice_mut().expect("parameters must be in standard layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_is_near_exact() {
        let r = finite_diff_check(|t, p| t.sum_squares(p[0]), &[array![[3.0]]], 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn linear_is_near_exact() {
        let r = finite_diff_check(
            |t, p| {
                let s = t.sum(p[0])?;
                t.scale(s, 2.5)
            },
            &[array![[1.0, -4.0], [0.3, 2.0]]],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-10, "{r:?}");
    }

    #[test]
    fn detects_nondeterminism() {
        let mut calls = 0.0;
        let err = finite_diff_check(
            |t, p| {
                calls += 1.0;
                let s = t.sum(p[0])?;
                t.scale(s, calls)
            },
            &[array![[1.0]]],
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::NonDeterministic { .. }));
    }

    #[test]
    fn rejects_bad_step() {
        let err = finite_diff_check(|t, p| t.sum(p[0]), &[array![[1.0]]], 0.0).unwrap_err();
        assert_eq!(err, TensorError::InvalidStep(0.0));
    }
}

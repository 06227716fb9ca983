//! Central finite-difference checking of tape gradients.

use super::{Matrix, Tape, Tensor};
use crate::error::Result;

/// Outcome of comparing tape gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// `‖g_tape − g_fd‖₂ / max(‖g_fd‖₂, ‖g_tape‖₂, 1e-12)` over all inputs.
    pub relative_error: f64,
    pub max_abs_error: f64,
    pub tape_grads: Vec<Matrix>,
    pub numeric_grads: Vec<Matrix>,
}

/// Compares the gradient of a scalar function of several matrices against
/// central finite differences with the given step.
///
/// `f` builds the scalar on a fresh tape from leaves holding `inputs`, in
/// order. It is re-evaluated `2 · Σ len(input)` times.
pub fn check_gradients<F>(inputs: &[Matrix], step: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    tape.backward(out)?;
    let tape_grads: Vec<Matrix> = leaves
        .iter()
        .zip(inputs)
        .map(|(&t, m)| tape.grad(t).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();

    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<Tensor> = values.iter().map(|m| tape.constant(m.clone())).collect();
        let out = f(&mut tape, &leaves)?;
        Ok(tape.value(out).get(0, 0))
    };

    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut numeric_grads = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let (rows, cols) = inputs[k].shape();
        let mut grad = Matrix::zeros(rows, cols);
        for p in 0..rows * cols {
            let orig = work[k].data()[p];
            work[k].data_mut()[p] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[p] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[p] = orig;
            grad.data_mut()[p] = (plus - minus) / (2.0 * step);
        }
        numeric_grads.push(grad);
    }

    let mut diff_sq = 0.0;
    let mut fd_sq = 0.0;
    let mut tape_sq = 0.0;
    let mut max_abs_error: f64 = 0.0;
    for (a, n) in tape_grads.iter().zip(&numeric_grads) {
        for (x, y) in a.data().iter().zip(n.data()) {
            diff_sq += (x - y) * (x - y);
            fd_sq += y * y;
            tape_sq += x * x;
            max_abs_error = max_abs_error.max((x - y).abs());
        }
    }
    let relative_error = diff_sq.sqrt() / fd_sq.sqrt().max(tape_sq.sqrt()).max(1e-12);
    Ok(GradCheck {
        relative_error,
        max_abs_error,
        tape_grads,
        numeric_grads,
    })
}

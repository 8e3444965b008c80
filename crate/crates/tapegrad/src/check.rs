//! Central-difference gradient verification.
//!
//! The checker is the reference oracle for every differentiable operation: it
//! recomputes the full forward pass per perturbed element and never reuses the
//! backward machinery it is checking.

use crate::error::Error;
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` must construct a scalar loss from a single input leaf; it is called
/// once for the analytic gradient and twice per checked element for the
/// numeric one. Returns the worst relative error
/// `max_i |fd_i - g_i| / max(1, |g_i|)`.
///
/// # Errors
/// Fails when `build` fails or produces a non-scalar loss.
pub fn finite_difference_check<F>(build: F, x: &Tensor, step: f64) -> Result<f64, Error>
where
    F: Fn(&mut Tape, VarId) -> Result<VarId, Error>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    finite_difference_check_subset(build, x, &all, step)
}

/// `finite_difference_check` restricted to chosen element indices.
///
/// Large parameter tensors are checked on a sampled subset; the analytic
/// backward pass still runs once over the whole graph.
pub fn finite_difference_check_subset<F>(
    build: F,
    x: &Tensor,
    indices: &[usize],
    step: f64,
) -> Result<f64, Error>
where
    F: Fn(&mut Tape, VarId) -> Result<VarId, Error>,
{
    if step <= 0.0 {
        return Err(Error::Invalid { op: "finite_difference_check", msg: "step must be positive".into() });
    }
    let mut tape = Tape::new();
    let id = tape.param(x.clone());
    let loss = build(&mut tape, id)?;
    if tape.value(loss).numel() != 1 {
        return Err(Error::NonScalarLoss { shape: tape.shape(loss).to_vec() });
    }
    tape.backward(loss)?;
    let analytic = tape.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |probe: &Tensor| -> Result<f64, Error> {
        let mut t = Tape::new();
        let v = t.leaf(probe.clone());
        let l = build(&mut t, v)?;
        Ok(t.value(l).item())
    };

    let mut worst = 0.0f64;
    for &i in indices {
        debug_assert!(i < x.numel(), "check index in range");
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
        let g = analytic.data()[i];
        let rel = (fd - g).abs() / g.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

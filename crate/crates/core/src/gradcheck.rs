//! Central-finite-difference gradient checking. The checked function
//! returns both the loss and its analytic gradients, so the same closure
//! drives the analytic and numerical sides.

use crate::real::Real;
use crate::tensor::Tensor;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum GradCheckError {
    BadEps(f64),
    NonDeterministic,
    GradCountMismatch { expected: usize, got: usize },
    GradShapeMismatch { index: usize },
}

impl fmt::Display for GradCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradCheckError::BadEps(e) => write!(f, "eps {e} outside (0, 1e-2]"),
            GradCheckError::NonDeterministic => {
                write!(f, "function returned different losses for identical inputs")
            }
            GradCheckError::GradCountMismatch { expected, got } => {
                write!(f, "function returned {got} grads for {expected} params")
            }
            GradCheckError::GradShapeMismatch { index } => {
                write!(f, "grad shape mismatch at param {index}")
            }
        }
    }
}

/// Max over all coordinates of |analytic - central difference| /
/// max(|analytic|, |cd|, 1e-8).
pub fn grad_check<R, F>(
    mut f: F,
    params: &mut [Tensor<R>],
    eps: f64,
) -> Result<f64, GradCheckError>
where
    R: Real,
    F: FnMut(&[Tensor<R>]) -> (R, Vec<Tensor<R>>),
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(GradCheckError::BadEps(eps));
    }
    let (loss_a, analytic) = f(params);
    let (loss_b, _) = f(params);
    if loss_a.bits() != loss_b.bits() {
        return Err(GradCheckError::NonDeterministic);
    }
    if analytic.len() != params.len() {
        return Err(GradCheckError::GradCountMismatch {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    for (i, (g, p)) in analytic.iter().zip(params.iter()).enumerate() {
        if g.shape() != p.shape() {
            return Err(GradCheckError::GradShapeMismatch { index: i });
        }
    }

    let step = R::from_f64(eps);
    let mut max_rel = 0.0f64;
    for pi in 0..params.len() {
        for ci in 0..params[pi].len() {
            let orig = params[pi].data()[ci];
            params[pi].data_mut()[ci] = orig + step;
            let (lp, _) = f(params);
            params[pi].data_mut()[ci] = orig - step;
            let (lm, _) = f(params);
            params[pi].data_mut()[ci] = orig;

            let cd = (lp.to_f64() - lm.to_f64()) / (2.0 * eps);
            let an = analytic[pi].data()[ci].to_f64();
            let denom = an.abs().max(cd.abs()).max(1e-8);
            let rel = (an - cd).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

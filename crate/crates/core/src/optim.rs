//! SGD and Adam over flat parameter lists. Moment buffers are keyed by
//! parameter position, so the caller must present parameters in a stable
//! order (models expose `params_mut` in canonical order).

use crate::real::Real;
use crate::tensor::Tensor;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Algorithm {
    pub fn adam_default() -> Self {
        Algorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptimError {
    ParamCountMismatch { params: usize, grads: usize },
    ShapeMismatch { index: usize },
    NonFiniteGrad { index: usize },
}

impl fmt::Display for OptimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimError::ParamCountMismatch { params, grads } => {
                write!(f, "{params} params but {grads} grads")
            }
            OptimError::ShapeMismatch { index } => {
                write!(f, "grad shape mismatch at param {index}")
            }
            OptimError::NonFiniteGrad { index } => {
                write!(f, "non-finite gradient at param {index}")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer<R> {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    step: u64,
    first_moment: Vec<Tensor<R>>,
    second_moment: Vec<Tensor<R>>,
}

impl<R: Real> Optimizer<R> {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Optimizer {
            algorithm,
            learning_rate,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(Algorithm::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(Algorithm::adam_default(), learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. A `None` gradient leaves its parameter untouched.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<R>],
        grads: &[Option<Tensor<R>>],
    ) -> Result<(), OptimError> {
        if params.len() != grads.len() {
            return Err(OptimError::ParamCountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(OptimError::ShapeMismatch { index: i });
                }
                if !g.all_finite() {
                    return Err(OptimError::NonFiniteGrad { index: i });
                }
            }
        }
        if let Algorithm::Adam { .. } = self.algorithm {
            if self.first_moment.is_empty() {
                for p in params.iter() {
                    self.first_moment.push(Tensor::zeros(p.rows(), p.cols()));
                    self.second_moment.push(Tensor::zeros(p.rows(), p.cols()));
                }
            }
        }
        self.step += 1;
        match self.algorithm {
            Algorithm::Sgd => {
                let lr = R::from_f64(self.learning_rate);
                for (p, g) in params.iter_mut().zip(grads) {
                    let Some(g) = g else { continue };
                    for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * gv;
                    }
                }
            }
            Algorithm::Adam { beta1, beta2, eps } => {
                let b1 = R::from_f64(beta1);
                let b2 = R::from_f64(beta2);
                let one = R::ONE;
                let bc1 = 1.0 - libm::pow(beta1, self.step as f64);
                let bc2 = 1.0 - libm::pow(beta2, self.step as f64);
                let lr_t = R::from_f64(self.learning_rate / bc1);
                let bc2_sqrt = R::from_f64(libm::sqrt(bc2));
                let eps = R::from_f64(eps);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let Some(g) = g else { continue };
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    for (((pv, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut())
                        .zip(v.data_mut().iter_mut())
                    {
                        *mv = b1 * *mv + (one - b1) * gv;
                        *vv = b2 * *vv + (one - b2) * gv * gv;
                        // update = lr * m_hat / (sqrt(v_hat) + eps), folded
                        // so only one division happens per coordinate
                        *pv -= lr_t * *mv / ((*vv).sqrt() / bc2_sqrt + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_applies_lr_times_grad() {
        let mut p = Tensor::scalar(1.0f64);
        let g = Tensor::scalar(0.5);
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut [&mut p], &[Some(g)]).unwrap();
        assert!((p.item() - 0.95).abs() < 1e-12);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_grad_leaves_param_unchanged() {
        let mut p = Tensor::scalar(2.5f64);
        let mut opt = Optimizer::sgd(0.3);
        opt.step(&mut [&mut p], &[Some(Tensor::scalar(0.0))]).unwrap();
        assert_eq!(p.item(), 2.5);
        opt.step(&mut [&mut p], &[None]).unwrap();
        assert_eq!(p.item(), 2.5);
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        // step 1 with moments starting at zero:
        //   m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        for &g0 in &[0.5f64, -1.25, 3.0e-3] {
            let mut p = Tensor::scalar(1.0f64);
            let mut opt = Optimizer::adam(1e-3);
            opt.step(&mut [&mut p], &[Some(Tensor::scalar(g0))]).unwrap();
            let expect = 1.0 - 1e-3 * g0 / (g0.abs() + 1e-8);
            assert!(
                (p.item() - expect).abs() < 1e-9,
                "g={g0}: got {}, expected {expect}",
                p.item()
            );
            // bias-corrected first step has magnitude close to lr
            assert!((1.0 - p.item()).abs() <= 1e-3 + 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = Tensor::<f64>::zeros(2, 2);
        let g = Tensor::<f64>::zeros(2, 3);
        let mut opt = Optimizer::sgd(0.1);
        assert_eq!(
            opt.step(&mut [&mut p], &[Some(g)]),
            Err(OptimError::ShapeMismatch { index: 0 })
        );
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut p = Tensor::scalar(4.0f64);
        let mut opt = Optimizer::adam(0.05);
        for _ in 0..2000 {
            let g = Tensor::scalar(2.0 * p.item());
            opt.step(&mut [&mut p], &[Some(g)]).unwrap();
        }
        assert!(p.item().abs() < 1e-3, "adam failed to minimize x^2: {}", p.item());
    }
}

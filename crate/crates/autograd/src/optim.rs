use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<F: Scalar> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: F) -> Self {
        Adam {
            lr,
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            eps: F::lit(1e-8),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<F>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<F>] {
        &self.second
    }

    /// Applies one update to every parameter in place.
    pub fn step(&mut self, params: &mut [Tensor<F>], grads: &[Tensor<F>]) -> Result<()> {
        self.step_refs(params.iter_mut().collect(), grads)
    }

    /// [`Adam::step`] over parameters borrowed from separate places.
    pub fn step_refs(&mut self, mut params: Vec<&mut Tensor<F>>, grads: &[Tensor<F>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(TensorError::dim("adam_step", format!("{} parameters, {} gradients", params.len(), grads.len())));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TensorError::dim(
                    "adam_step",
                    format!("parameter {i} has shape {:?}, gradient {:?}", p.shape(), g.shape()),
                ));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![F::zero(); p.numel()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel()) {
            return Err(TensorError::dim("adam_step", "parameter set changed between steps"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = F::one() - self.beta1.powi(t);
        let c2 = F::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.ensure_finite("adam_step")?;
        }
        Ok(())
    }
}

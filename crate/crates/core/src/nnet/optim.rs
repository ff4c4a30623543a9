use crate::error::{Error, Result};
use crate::nnet::mlp::{Grads, Mlp};

/// Bias-corrected adaptive moment estimation state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(params: &Mlp, lr: f64) -> Self {
        let n = params.param_count();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Applies one update. Rejects non-finite gradients before touching any state.
    pub fn step(&mut self, params: &mut Mlp, grads: &Grads) -> Result<()> {
        let n = params.param_count();
        if self.m.len() != n || self.v.len() != n {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, network has {n}",
                self.m.len()
            )));
        }
        for (li, layer) in grads.layers.iter().enumerate() {
            if let Some(i) = layer.weight.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in layer {li} weight {i} at step {}",
                    self.step + 1
                )));
            }
            if let Some(i) = layer.bias.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in layer {li} bias {i} at step {}",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .params_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

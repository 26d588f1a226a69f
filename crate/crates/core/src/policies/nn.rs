//! One-hidden-layer perceptron with a scalar output, trained with Adam on
//! squared error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Parameters are stored flat: hidden weights (row per hidden unit), hidden
/// biases, output weights, output bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub inputs: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    pub optimizer: Adam,
}

impl QNetwork {
    pub fn param_count(inputs: usize, hidden: usize) -> usize {
        hidden * inputs + hidden + hidden + 1
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` per layer.
    pub fn new(inputs: usize, hidden: usize, lr: f64, rng: &mut SimRng) -> Self {
        let mut net = Self::zeros(inputs, hidden, lr);
        let a = 1.0 / (inputs as f64).sqrt();
        let b = 1.0 / (hidden as f64).sqrt();
        let split = hidden * inputs + hidden;
        for (k, p) in net.params.iter_mut().enumerate() {
            let bound = if k < split { a } else { b };
            *p = rng.gen_range(-bound..bound);
        }
        net
    }

    pub fn zeros(inputs: usize, hidden: usize, lr: f64) -> Self {
        let len = Self::param_count(inputs, hidden);
        Self {
            inputs,
            hidden,
            params: vec![0.0; len],
            optimizer: Adam::new(lr, len),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::InvalidArgument(format!(
                "network expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Hidden activations (post-ReLU) and output.
    fn run(&self, x: &[f64], act: &mut [f64]) -> f64 {
        let (d, h) = (self.inputs, self.hidden);
        let w1 = &self.params[..h * d];
        let b1 = &self.params[h * d..h * d + h];
        let w2 = &self.params[h * d + h..h * d + 2 * h];
        let b2 = self.params[h * d + 2 * h];
        let mut out = b2;
        for i in 0..h {
            let row = &w1[i * d..(i + 1) * d];
            let z = b1[i] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            act[i] = z.max(0.0);
            out += w2[i] * act[i];
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut act = vec![0.0; self.hidden];
        Ok(self.run(x, &mut act))
    }

    /// Loss `(f(x) - y)^2` and its gradient with respect to every parameter.
    pub fn gradient(&self, x: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        if !target.is_finite() {
            return Err(Error::NonFinite("network target".into()));
        }
        let (d, h) = (self.inputs, self.hidden);
        let mut act = vec![0.0; h];
        let out = self.run(x, &mut act);
        let err = out - target;
        let g = 2.0 * err;
        let mut grad = vec![0.0; self.params.len()];
        let w2 = &self.params[h * d + h..h * d + 2 * h];
        for i in 0..h {
            grad[h * d + h + i] = g * act[i];
            if act[i] > 0.0 {
                let gz = g * w2[i];
                grad[h * d + i] = gz;
                for (k, xk) in x.iter().enumerate() {
                    grad[i * d + k] = gz * xk;
                }
            }
        }
        grad[h * d + 2 * h] = g;
        Ok((err * err, grad))
    }

    /// One Adam step on `(f(x) - y)^2`. Returns the loss before the step.
    pub fn train_step(&mut self, x: &[f64], target: f64) -> Result<f64> {
        let (loss, grad) = self.gradient(x, target)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        self.optimizer.apply(&mut self.params, &grad);
        Ok(loss)
    }
}

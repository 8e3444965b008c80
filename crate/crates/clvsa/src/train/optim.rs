//! Gradient clipping and adaptive-moment updates.

use indexmap::IndexMap;
use tapegrad::Tensor;

use crate::error::{Error, Result};
use crate::model::params::ParamStore;

/// Scales all gradients so their joint Euclidean norm stays at or below
/// `clip`. Returns the pre-clip norm. Gradients already inside the ceiling
/// are left untouched, bit for bit.
pub fn clip_global_norm(grads: &mut [(String, Tensor)], clip: f64) -> f64 {
    let squared: f64 = grads
        .iter()
        .map(|(_, g)| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = squared.sqrt();
    if norm > clip {
        let scale = clip / norm;
        for (_, g) in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Adam with the standard moment estimates and bias correction.
#[derive(Debug)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    /// Updates taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from named gradients.
    ///
    /// # Errors
    /// Fails when a gradient names an unknown parameter or disagrees on size.
    pub fn apply(&mut self, params: &mut ParamStore, grads: &[(String, Tensor)]) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let tensor = params.get_mut(name)?;
            if tensor.numel() != grad.numel() {
                return Err(Error::model(format!(
                    "gradient for {name} has {} values, parameter has {}",
                    grad.numel(),
                    tensor.numel()
                )));
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; grad.numel()], vec![0.0; grad.numel()]));
            let data = tensor.data_mut();
            for (i, g) in grad.data().iter().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

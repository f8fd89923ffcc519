//! Adam optimizer with bias correction.

use super::{Param, TensorError};

/// Optimizer state: step counter plus first/second moment accumulators,
/// one pair per parameter, aligned with the parameter list passed to
/// [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Default hyperparameters: lr 0.001, β₁ 0.9, β₂ 0.999, ε 1e−8.
    pub fn new() -> Self {
        Self::with_hyper(0.001, 0.9, 0.999, 1e-8)
    }

    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self::with_hyper(learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over `params`, whose gradients must have
    /// been populated by a backward pass. Gradients are zeroed afterwards.
    /// The parameter list must be the same (same order, same shapes) on
    /// every call.
    pub fn step(&mut self, params: &[Param]) -> Result<(), TensorError> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed size");
        for (index, p) in params.iter().enumerate() {
            if p.borrow().grad().is_none() {
                return Err(TensorError::GradientUnavailable { index });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (index, p) in params.iter().enumerate() {
            let mut tensor = p.borrow_mut();
            assert_eq!(
                tensor.len(),
                self.m[index].len(),
                "parameter {index} changed shape"
            );
            let m = &mut self.m[index];
            let v = &mut self.v[index];
            // Split borrows: gradient is read while values are written.
            let grad = tensor.grad().unwrap().to_vec();
            let values = tensor.values_mut();
            for k in 0..values.len() {
                let g = grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                values[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            tensor.zero_grad();
        }
        Ok(())
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

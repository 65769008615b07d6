use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One descent step `θ ← θ − lr·m̂/(√v̂ + ε)`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(LearnError::Shape(format!(
                "adam state for {} parameters got {} params / {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let b2t = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = AdamState::new(2, 0.1);
        let mut p = [1.0, -1.0];
        a.update(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-8 && (p[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut a = AdamState::new(3, 0.0);
        let mut p = [1.0, 2.0, 3.0];
        a.update(&mut p, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p, [1.0, 2.0, 3.0]);
        assert!(a.update(&mut p, &[1.0]).is_err());
    }
}

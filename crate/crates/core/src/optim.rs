//! Adaptive moment estimation over the flat parameter vector.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam accumulators; shapes match the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Result<Adam> {
        if !lr.is_finite() || lr <= 0.0 {
            return Err(Error::validation(format!(
                "optimizer learning rate must be finite and > 0, got {lr}"
            )));
        }
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        })
    }

    /// One ascent step along `grad` (callers negate for descent).
    pub fn ascend(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len(), "parameter/accumulator shape");
        assert_eq!(grad.len(), self.m.len(), "gradient/accumulator shape");
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] += self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_bit_identical() {
        let mut opt = Adam::new(4, 0.01).unwrap();
        let mut theta = vec![0.5, -0.25, 0.125, 1.0];
        let before = theta.clone();
        opt.ascend(&mut theta, &[0.0; 4]);
        assert_eq!(theta, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn ascends_along_positive_gradient() {
        let mut opt = Adam::new(2, 0.1).unwrap();
        let mut theta = vec![0.0, 0.0];
        opt.ascend(&mut theta, &[1.0, -1.0]);
        assert!(theta[0] > 0.0);
        assert!(theta[1] < 0.0);
        // First step moves by ~lr regardless of gradient scale.
        assert!((theta[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(Adam::new(4, 0.0).is_err());
        assert!(Adam::new(4, -0.1).is_err());
        assert!(Adam::new(4, f64::NAN).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::{NnError, Parameters};

/// Bias-corrected Adam state for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One update on raw slices.
    pub fn step_slices(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        let n = self.first_moment.len();
        if params.len() != n || grads.len() != n {
            return Err(NnError::ShapeMismatch {
                expected: n,
                found: if params.len() != n { params.len() } else { grads.len() },
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..n {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }

    /// One update of every parameter of `params` with the matching entries of `grads`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<(), NnError> {
        let g = grads.flat();
        let mut p = params.flat();
        self.step_slices(&mut p, &g)?;
        params.set_flat(&p);
        Ok(())
    }
}

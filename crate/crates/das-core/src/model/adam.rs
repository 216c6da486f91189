//! Adam optimizer state.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &AdamConfig) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_params_untouched() {
        let mut p = vec![1.0, -2.5, 0.25];
        let before = p.clone();
        let mut adam = AdamState::new(3);
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        adam.step(&mut p, &[0.3, -0.7, 1.1], &cfg);
        assert_eq!(p, before);
    }

    #[test]
    fn descends_a_quadratic() {
        // Minimize (x - 3)^2; gradient 2(x - 3).
        let mut p = vec![0.0];
        let mut adam = AdamState::new(1);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        for _ in 0..400 {
            let g = 2.0 * (p[0] - 3.0);
            adam.step(&mut p, &[g], &cfg);
        }
        assert!((p[0] - 3.0).abs() < 0.05, "x = {}", p[0]);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut p = vec![0.5, -0.5];
            let mut adam = AdamState::new(2);
            let cfg = AdamConfig::default();
            for k in 0..10 {
                let g = [p[0] * 0.3 + k as f64 * 0.01, -p[1]];
                adam.step(&mut p, &g, &cfg);
            }
            p
        };
        assert_eq!(run(), run());
    }
}

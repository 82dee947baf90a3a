use serde::{Deserialize, Serialize};

use super::network::Tensors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Tensors,
    v: Tensors,
    t: u64,
}

impl Adam {
    pub fn new(k: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: Tensors::zeros(k),
            v: Tensors::zeros(k),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Tensors, grads: &Tensors) {
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let params = params.as_slices_mut();
        let grads = grads.as_slices();
        let ms = self.m.as_slices_mut();
        let vs = self.v.as_slices_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // with bias correction the first update is lr · g/|g| (up to epsilon)
        let mut p = Tensors::zeros(2);
        let mut g = Tensors::zeros(2);
        g.bn_gamma = vec![0.5, -3.0];
        let mut adam = Adam::new(2, AdamConfig::default());
        adam.step(&mut p, &g);
        assert!((p.bn_gamma[0] + 1e-3).abs() < 1e-10);
        assert!((p.bn_gamma[1] - 1e-3).abs() < 1e-10);
        assert_eq!(p.bn_beta, vec![0.0, 0.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = Σ (x_i - 3)², gradient 2(x - 3)
        let mut p = Tensors::zeros(2);
        let mut adam = Adam::new(
            2,
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
        );
        for _ in 0..2000 {
            let mut g = Tensors::zeros(2);
            g.bn_beta = p.bn_beta.iter().map(|x| 2.0 * (x - 3.0)).collect();
            adam.step(&mut p, &g);
        }
        assert!(p.bn_beta.iter().all(|x| (x - 3.0).abs() < 1e-3));
    }
}

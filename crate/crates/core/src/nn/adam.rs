use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::Tensor;

/// Adam hyperparameters. Defaults follow the WGAN-GP recipe
/// (lr 1e-4, β₁ 0, β₂ 0.9).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled L2 decay applied as `θ ← θ − lr·decay·θ`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &Parameters) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.numel()]).collect();
        AdamState {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` using `grads`, which must be
    /// ordered and shaped like [`Parameters::tensors`].
    pub fn step(&mut self, params: &mut Parameters, grads: &[Tensor]) -> Result<()> {
        let count = params.tensors().count();
        if grads.len() != count || self.first.len() != count {
            return Err(Error::dimension("adam_step", &[grads.len()], &[count]));
        }
        for (p, g) in params.tensors().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dimension("adam_step", p.shape(), g.shape()));
            }
        }

        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *w);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpConfig};

    fn scalar_params(value: f64) -> Parameters {
        // Smallest MLP; only the first weight is exercised.
        let config = MlpConfig::new(vec![1, 1, 1], Activation::Identity).unwrap();
        let mut p = Parameters::zeros(&config);
        p.layers_mut()[0].weight.data_mut()[0] = value;
        p
    }

    fn grads_for(p: &Parameters, g: f64) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = p.tensors().map(Tensor::zeros_like).collect();
        out[0].data_mut()[0] = g;
        out
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_params(0.7);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let grads = grads_for(&p, 0.0);
        adam.step(&mut p, &grads).unwrap();
        assert_eq!(p.to_flat(), scalar_params(0.7).to_flat());
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.3, -2.0] {
            let mut p = scalar_params(1.0);
            let config = AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            };
            let mut adam = AdamState::new(config, &p);
            let grads = grads_for(&p, g);
            adam.step(&mut p, &grads).unwrap();
            let update = p.to_flat()[0] - 1.0;
            assert!((update + 1e-3 * g.signum()).abs() < 1e-6, "update {update}");
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = scalar_params(0.5);
        let config = AdamConfig {
            lr: 0.0,
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(config, &p);
        let grads = grads_for(&p, 3.0);
        adam.step(&mut p, &grads).unwrap();
        assert_eq!(p.to_flat()[0], 0.5);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar_params(0.5);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let mut grads = grads_for(&p, 1.0);
        grads[0] = Tensor::zeros(&[2, 1]);
        assert!(matches!(
            adam.step(&mut p, &grads),
            Err(Error::Dimension { .. })
        ));
        assert!(adam.step(&mut p, &grads[1..]).is_err());
    }

    #[test]
    fn five_steps_match_scalar_recurrence() {
        let config = AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let gradients = [0.5, -0.25, 1.5, 0.0, -3.0];

        // Independent scalar recurrence.
        let (mut w, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for (i, &g) in gradients.iter().enumerate() {
            let t = (i + 1) as f64;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powf(t));
            let vh = v / (1.0 - 0.999f64.powf(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }

        let mut p = scalar_params(2.0);
        let mut adam = AdamState::new(config, &p);
        for &g in &gradients {
            let grads = grads_for(&p, g);
            adam.step(&mut p, &grads).unwrap();
        }
        assert!((p.to_flat()[0] - w).abs() < 1e-12);
    }

    #[test]
    fn decay_only_update_shrinks() {
        let mut p = scalar_params(0.8);
        let config = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(config, &p);
        let grads = grads_for(&p, 0.0);
        adam.step(&mut p, &grads).unwrap();
        let w = p.to_flat()[0];
        assert!(w > 0.0 && w < 0.8);
        assert!((w - 0.8 * (1.0 - 0.05)).abs() < 1e-15);
    }
}

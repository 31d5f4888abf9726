//! AdamW with decoupled weight decay and the cosine annealing schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 5e-5,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

/// AdamW state: bias-corrected first/second moments plus a step counter.
///
/// The decoupled decay `w <- w - lr * lambda * w` is applied before the
/// adaptive update, so a zero-gradient step shrinks weights by exactly
/// `1 - lr * lambda`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first_moments: Vec<Tensor>,
    second_moments: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update. `params` and `grads` must stay in the same order
    /// across calls; moment buffers are allocated on first use.
    pub fn step(&mut self, params: &mut [(String, Tensor)], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                op: "adamw_step".into(),
                details: format!("{} params vs {} grads", params.len(), grads.len()),
            });
        }
        for ((name, param), grad) in params.iter().zip(grads.iter()) {
            if !param.same_shape(grad) {
                return Err(Error::Shape {
                    op: "adamw_step".into(),
                    details: format!(
                        "parameter '{name}' has shape {:?} but grad has {:?}",
                        param.shape(),
                        grad.shape()
                    ),
                });
            }
            if !grad.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of parameter '{name}'"),
                });
            }
        }
        if self.first_moments.is_empty() {
            self.first_moments = params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
            self.second_moments = self.first_moments.clone();
        }

        self.step += 1;
        let t = self.step as i32;
        let (beta1, beta2) = self.config.betas;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let lr = self.config.lr;
        let decay = 1.0 - lr * self.config.weight_decay;

        for (((_, param), grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first_moments.iter_mut().zip(self.second_moments.iter_mut()))
        {
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                pd[i] *= decay;
                md[i] = beta1 * md[i] + (1.0 - beta1) * g;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * g * g;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + self.config.eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing:
/// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total_steps)) / 2.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::Schedule { step, total_steps });
    }
    if total_steps == 0 {
        return Ok(lr_max);
    }
    let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
    Ok(lr_min + (lr_max - lr_min) * (1.0 + phase.cos()) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let lr = cosine_lr(0, 100, 5e-5, 0.0).unwrap();
        assert!((lr - 5e-5).abs() < 1e-18);
        let lr = cosine_lr(100, 100, 5e-5, 0.0).unwrap();
        assert!(lr.abs() < 1e-18);
        let lr = cosine_lr(50, 100, 5e-5, 1e-5).unwrap();
        assert!((lr - 3e-5).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_step_past_total() {
        assert!(cosine_lr(101, 100, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_gradient_step_is_pure_decay() {
        let config = AdamWConfig {
            lr: 1.0,
            weight_decay: 0.01,
            ..Default::default()
        };
        let mut opt = AdamW::new(config);
        let mut params = vec![("w".to_string(), Tensor::vector(vec![2.0, -4.0]))];
        let grads = vec![Tensor::vector(vec![0.0, 0.0])];
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params[0].1.data(), &[0.99 * 2.0, 0.99 * -4.0]);
    }

    #[test]
    fn first_step_direction_matches_hand_trace() {
        // With lambda = 0, the bias corrections cancel on step one and the
        // update is -lr * g / (|g| + eps).
        let config = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(config);
        let w0 = 1.5;
        let g = 0.3;
        let mut params = vec![("w".to_string(), Tensor::vector(vec![w0]))];
        opt.step(&mut params, &[Tensor::vector(vec![g])]).unwrap();
        let expected = w0 - 0.1 * g / (g.abs() + 1e-8);
        assert!((params[0].1.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn repeated_steps_are_not_idempotent() {
        let mut opt = AdamW::new(AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut params = vec![("w".to_string(), Tensor::vector(vec![1.0]))];
        let grads = vec![Tensor::vector(vec![0.5])];
        opt.step(&mut params, &grads).unwrap();
        let after_one = params[0].1.data()[0];
        opt.step(&mut params, &grads).unwrap();
        let after_two = params[0].1.data()[0];
        assert_ne!(after_one - 1.0, after_two - after_one);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut params = vec![("hidden_0_w".to_string(), Tensor::vector(vec![1.0]))];
        let err = opt
            .step(&mut params, &[Tensor::vector(vec![f64::NAN])])
            .unwrap_err();
        assert!(err.to_string().contains("hidden_0_w"));
    }

    #[test]
    fn lambda_zero_matches_plain_adam_for_three_steps() {
        let (lr, beta1, beta2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let grads = [0.7, 0.1, -0.3];
        // Plain Adam reference with no decay term anywhere.
        let mut w_ref = 2.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            w_ref -= lr * (m / (1.0 - beta1.powi(t))) / ((v / (1.0 - beta2.powi(t))).sqrt() + eps);
        }
        let mut opt = AdamW::new(AdamWConfig {
            lr,
            weight_decay: 0.0,
            betas: (beta1, beta2),
            eps,
        });
        let mut params = vec![("w".to_string(), Tensor::vector(vec![2.0]))];
        for &g in &grads {
            opt.step(&mut params, &[Tensor::vector(vec![g])]).unwrap();
        }
        assert!((params[0].1.data()[0] - w_ref).abs() < 1e-12);
    }

    #[test]
    fn three_step_trace_matches_reference_equations() {
        // Independent scalar re-derivation of the published update rule.
        let (lr, lambda, beta1, beta2, eps) = (0.05, 0.1, 0.9, 0.999, 1e-8);
        let grads = [0.4, -0.2, 0.9];
        let mut w_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            w_ref *= 1.0 - lr * lambda;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            let m_hat = m / (1.0 - beta1.powi(t));
            let v_hat = v / (1.0 - beta2.powi(t));
            w_ref -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let mut opt = AdamW::new(AdamWConfig {
            lr,
            weight_decay: lambda,
            betas: (beta1, beta2),
            eps,
        });
        let mut params = vec![("w".to_string(), Tensor::vector(vec![1.0]))];
        for &g in &grads {
            opt.step(&mut params, &[Tensor::vector(vec![g])]).unwrap();
        }
        assert!((params[0].1.data()[0] - w_ref).abs() < 1e-12);
    }
}

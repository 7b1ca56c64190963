//! AdamW with decoupled weight decay.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamwConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamwConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamwConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct AdamwState {
    pub config: AdamwConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl AdamwState {
    /// Zeroed accumulators for parameters of the given shapes.
    pub fn new(config: AdamwConfig, shapes: &[Vec<usize>]) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", config.lr)));
        }
        let sizes: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
        Ok(Self {
            config,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter tensor. Parameters are left untouched
    /// if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        let mut offset = 0;
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[k].len() || g.len() != p.len() {
                return Err(Error::invalid(format!("tensor {k}: shape mismatch")));
            }
            if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    index: offset + i,
                    message: format!("non-finite gradient {}", g.data()[i]),
                });
            }
            offset += p.len();
        }
        if !(self.config.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }

        self.step += 1;
        let AdamwConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * weight_decay * *p;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear warm-up to a constant learning rate.
#[derive(Clone, Copy, Debug)]
pub struct WarmupSchedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
}

impl WarmupSchedule {
    /// Warm-up over the first 5% of `total_steps`.
    pub fn for_run(base_lr: f64, total_steps: usize) -> Self {
        Self { base_lr, warmup_steps: total_steps / 20 }
    }

    /// Learning rate for zero-based step `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step >= self.warmup_steps {
            self.base_lr
        } else {
            self.base_lr * (step + 1) as f64 / self.warmup_steps as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> Tensor {
        Tensor::vector(&[p])
    }

    #[test]
    fn zero_grads_without_decay_leave_params() {
        let cfg = AdamwConfig { weight_decay: 0.0, ..AdamwConfig::with_lr(0.1) };
        let mut st = AdamwState::new(cfg, &[vec![2]]).unwrap();
        let mut p = Tensor::vector(&[1.5, -2.0]);
        let g = Tensor::vector(&[0.0, 0.0]);
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_grads_apply_decoupled_decay_alone() {
        let cfg = AdamwConfig { weight_decay: 0.01, ..AdamwConfig::with_lr(0.1) };
        let mut st = AdamwState::new(cfg, &[vec![2]]).unwrap();
        let mut p = Tensor::vector(&[1.5, -2.0]);
        let g = Tensor::vector(&[0.0, 0.0]);
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.5 - 0.001 * 1.5, -2.0 + 0.001 * 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g = 1, v_hat = g^2 = 1, so the step is lr / (1 + eps).
        let cfg = AdamwConfig { weight_decay: 0.0, ..AdamwConfig::with_lr(1e-3) };
        let mut st = AdamwState::new(cfg, &[vec![1]]).unwrap();
        let mut p = single(1.0);
        st.step(&mut [&mut p], &[&single(1.0)]).unwrap();
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn nan_gradient_reports_index() {
        let mut st = AdamwState::new(AdamwConfig::default(), &[vec![2], vec![3]]).unwrap();
        let mut a = Tensor::vector(&[0.0, 0.0]);
        let mut b = Tensor::vector(&[0.0, 0.0, 0.0]);
        let ga = Tensor::vector(&[0.0, 0.0]);
        let gb = Tensor::vector(&[0.0, f64::NAN, 0.0]);
        match st.step(&mut [&mut a, &mut b], &[&ga, &gb]) {
            Err(Error::Numeric { index, .. }) => assert_eq!(index, 3),
            other => panic!("expected numeric error, got {other:?}"),
        }
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn rejects_nonpositive_lr() {
        assert!(AdamwState::new(AdamwConfig::with_lr(0.0), &[vec![1]]).is_err());
    }

    #[test]
    fn warmup_is_linear_then_constant() {
        let s = WarmupSchedule::for_run(1e-3, 100);
        assert_eq!(s.warmup_steps, 5);
        assert!((s.lr_at(0) - 2e-4).abs() < 1e-18);
        assert_eq!(s.lr_at(4), 1e-3);
        assert_eq!(s.lr_at(99), 1e-3);
        assert_eq!(WarmupSchedule::for_run(1e-3, 10).lr_at(0), 1e-3);
    }
}

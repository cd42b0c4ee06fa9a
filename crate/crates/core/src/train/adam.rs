use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::TrainConfig;

/// Adam with bias correction and a linear warmup / linear decay schedule.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    peak_lr: f64,
    warmup: usize,
    total: usize,
}

impl Adam {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Adam {
        let warmup = (cfg.warmup_frac * cfg.steps as f64).ceil() as usize;
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            peak_lr: cfg.learning_rate,
            warmup,
            total: cfg.steps,
        }
    }

    /// Learning rate for 0-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup > 0 && step < self.warmup {
            return self.peak_lr * (step + 1) as f64 / self.warmup as f64;
        }
        let rest = self.total.saturating_sub(self.warmup).max(1);
        let done = (step - self.warmup.min(step)) as f64;
        self.peak_lr * (1.0 - done / rest as f64).max(0.0)
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32], step: usize) {
        self.t += 1;
        let lr = self.lr_at(step);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / bc1) as f32;
        let inv_bc2_sqrt = (1.0 / bc2.sqrt()) as f32;
        let eps = self.eps as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step_size * *m / (Float::sqrt(*v) * inv_bc2_sqrt + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warms_up_then_decays() {
        let cfg = TrainConfig { steps: 100, learning_rate: 1.0, ..TrainConfig::default() };
        let a = Adam::new(1, &cfg);
        assert_eq!(a.warmup, 6);
        assert!((a.lr_at(0) - 1.0 / 6.0).abs() < 1e-12);
        assert!((a.lr_at(5) - 1.0).abs() < 1e-12);
        assert!(a.lr_at(50) < 1.0 && a.lr_at(50) > 0.0);
        assert!(a.lr_at(99) < a.lr_at(50));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = TrainConfig { steps: 500, learning_rate: 0.1, warmup_frac: 0.0, ..TrainConfig::default() };
        let mut a = Adam::new(2, &cfg);
        let mut x = [3.0f32, -2.0];
        for s in 0..500 {
            let g = [2.0 * x[0], 2.0 * (x[1] - 1.0)];
            a.step(&mut x, &g, s);
        }
        assert!(x[0].abs() < 1e-2 && (x[1] - 1.0).abs() < 1e-2, "{x:?}");
    }
}

//! MLM objective, dynamic masking, the Adam training loop, perplexity and
//! k-shot fine-tuning.

mod adam;
mod kshot;
mod loss;
mod masking;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use kshot::{kshot_finetune, sample_kshot, KshotOutcome};
pub use loss::{batch_loss_grad, eval_loss, mlm_loss, LossGrad};
pub use masking::{dynamic_mask, MaskedBatch};
pub use trainer::{perplexity, train, train_windows, windows, LossRow, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability that a position is targeted.
    pub mask_rate: f64,
    /// Share of targeted positions replaced by `<mask>`.
    pub mask_token_frac: f64,
    /// Share of targeted positions replaced by a random regular token.
    pub random_token_frac: f64,
    /// Independently masked copies of each window per epoch.
    pub n_mask_copies: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Fraction of `steps` spent in linear warmup.
    pub warmup_frac: f64,
    /// Evaluate every this many steps (0 = only at start and end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 16,
            learning_rate: 1e-3,
            mask_rate: 0.135,
            mask_token_frac: 0.90,
            random_token_frac: 0.10,
            n_mask_copies: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-6,
            warmup_frac: 0.06,
            eval_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::Config(alloc::format!("mask_rate must be in (0,1), got {}", self.mask_rate)));
        }
        if (self.mask_token_frac + self.random_token_frac - 1.0).abs() > 1e-9
            || self.mask_token_frac < 0.0
            || self.random_token_frac < 0.0
        {
            return Err(Error::Config("mask_token_frac + random_token_frac must equal 1".into()));
        }
        if self.batch_size == 0 || self.n_mask_copies == 0 {
            return Err(Error::Config("batch_size and n_mask_copies must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("warmup_frac must be in [0,1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_masking_protocol() {
        let c = TrainConfig::default();
        assert_eq!(c.mask_rate, 0.135);
        assert_eq!(c.mask_token_frac, 0.90);
        assert_eq!(c.random_token_frac, 0.10);
        assert_eq!(c.n_mask_copies, 10);
        assert!(c.validate().is_ok());
        let bad = TrainConfig { random_token_frac: 0.2, ..c };
        assert!(bad.validate().is_err());
    }
}

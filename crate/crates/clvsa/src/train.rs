//! Walk-forward training: variational classification loss, Adam updates with
//! gradient clipping, rolling train/test folds over calendar months, and
//! ranked-retrieval metrics.

pub mod fold;
pub mod metrics;
pub mod optim;
pub mod walk;

pub use fold::train_fold;
pub use metrics::{accuracy, mean_average_precision, softmax};
pub use walk::{concatenated_predictions, walk_forward, FoldResult};

use tapegrad::{Tape, VarId};

use crate::data::AlignedSample;
use crate::error::{Error, Result};

/// Training hyper-parameters and fold geometry.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Target weight of the KL term once warm-up completes.
    pub kld_weight: f64,
    /// Steps over which the KL weight ramps linearly from 0. `None` takes a
    /// tenth of the fold's total step count. The ramp always spans at least
    /// one step, so the first update optimizes pure cross-entropy.
    pub warmup_steps: Option<usize>,
    pub train_months: usize,
    pub test_months: usize,
    pub step_months: usize,
    /// Global gradient-norm ceiling applied before the optimizer.
    pub clip_norm: f64,
    /// Continue each fold from the previous fold's weights instead of
    /// re-initializing.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            kld_weight: 0.1,
            warmup_steps: None,
            train_months: 12,
            test_months: 2,
            step_months: 2,
            clip_norm: 5.0,
            warm_start: false,
            seed: 7,
        }
    }
}

impl TrainConfig {
    /// # Errors
    /// Fails on non-positive sizes or non-finite rates.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        if !self.kld_weight.is_finite() || self.kld_weight < 0.0 {
            return Err(Error::config("kld_weight must be finite and non-negative"));
        }
        if self.train_months == 0 || self.test_months == 0 || self.step_months == 0 {
            return Err(Error::config("walk-forward window months must all be positive"));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::config("clip_norm must be finite and positive"));
        }
        Ok(())
    }
}

/// Classification loss with a weighted KL term.
///
/// When `beta` is zero or the pass has no KL node, the result is the
/// cross-entropy node itself, not a sum with a zero, so warm-up step 0
/// optimizes pure cross-entropy to the bit.
///
/// # Errors
/// Fails when `label` is out of range for the logits.
pub fn loss(
    tape: &mut Tape,
    logits: VarId,
    label: usize,
    kld: Option<VarId>,
    beta: f64,
) -> Result<VarId> {
    let ce = tape.cross_entropy_logits(logits, label)?;
    match kld {
        Some(k) if beta > 0.0 => {
            let weighted = tape.scale(k, beta);
            Ok(tape.add(ce, weighted)?)
        }
        _ => Ok(ce),
    }
}

/// Consecutive-day training pairs over a chronologically sorted sample run:
/// the model encodes day `i-1` and classifies day `i`.
pub fn day_pairs(samples: &[AlignedSample]) -> Vec<(usize, usize)> {
    (1..samples.len()).map(|i| (i - 1, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tapegrad::Tensor;

    fn logits_on(tape: &mut Tape, values: &[f64]) -> VarId {
        tape.leaf(Tensor::from_vec(vec![1, values.len()], values.to_vec()).unwrap())
    }

    #[test]
    fn uniform_logits_cost_ln_class_count() {
        let mut tape = Tape::new();
        let logits = logits_on(&mut tape, &[0.4, 0.4, 0.4]);
        let l = loss(&mut tape, logits, 1, None, 0.0).unwrap();
        let got = tape.value(l).data()[0];
        assert!((got - 3.0f64.ln()).abs() < 1e-12, "uniform scores cost ln 3, got {got}");
    }

    #[test]
    fn saturated_logits_cost_nearly_nothing() {
        let mut tape = Tape::new();
        let logits = logits_on(&mut tape, &[30.0, 0.0, 0.0]);
        let l = loss(&mut tape, logits, 0, None, 0.0).unwrap();
        assert!(tape.value(l).data()[0] < 1e-12);
    }

    #[test]
    fn kl_term_is_weighted_in() {
        let mut tape = Tape::new();
        let logits = logits_on(&mut tape, &[0.2, -0.1, 0.5]);
        let ce_only = loss(&mut tape, logits, 2, None, 0.0).unwrap();
        let ce_value = tape.value(ce_only).data()[0];
        let kld = tape.leaf(Tensor::from_vec(vec![1, 1], vec![2.0]).unwrap());
        let l = loss(&mut tape, logits, 2, Some(kld), 0.1).unwrap();
        assert_eq!(tape.value(l).data()[0], ce_value + 0.2);
    }

    #[test]
    fn zero_beta_returns_the_cross_entropy_node_itself() {
        let mut tape = Tape::new();
        let logits = logits_on(&mut tape, &[0.2, -0.1, 0.5]);
        let kld = tape.leaf(Tensor::from_vec(vec![1, 1], vec![5.0]).unwrap());
        let with_zero_beta = loss(&mut tape, logits, 0, Some(kld), 0.0).unwrap();
        let plain = loss(&mut tape, logits, 0, None, 0.0).unwrap();
        assert_eq!(tape.value(with_zero_beta).data(), tape.value(plain).data());
    }

    #[test]
    fn config_rejects_zeroes_where_they_break_training() {
        TrainConfig::default().validate().unwrap();
        let mut cfg = TrainConfig::default();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.step_months = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.clip_norm = 0.0;
        assert!(cfg.validate().is_err());
        // Zero learning rate stays legal: it is the no-op update contract.
        let mut cfg = TrainConfig::default();
        cfg.learning_rate = 0.0;
        cfg.validate().unwrap();
    }
}

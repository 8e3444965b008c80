//! One fold of training: mini-batch gradients, clipping, Adam, KL warm-up.
//!
//! Gradient evaluation parallelizes over the samples of a batch (one tape
//! each); the reduction over samples runs sequentially in sample order, so
//! job count never changes the result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tapegrad::{Tape, Tensor};

use super::optim::{clip_global_norm, Adam};
use super::TrainConfig;
use crate::data::AlignedSample;
use crate::error::{Error, Result};
use crate::exec::ordered_map;
use crate::model::forward::{Mode, Model};
use crate::util::sub_seed;

/// Loss and named gradients of one batch, gradients averaged over samples.
pub struct BatchGrad {
    pub sample_losses: Vec<f64>,
    pub grads: Vec<(String, Tensor)>,
}

fn sample_gradient(
    model: &Model,
    samples: &[AlignedSample],
    pair: (usize, usize),
    beta: f64,
    eps_seed: u64,
) -> Result<(f64, Vec<(String, Tensor)>)> {
    let mut tape = Tape::new();
    let out = model.forward(
        &mut tape,
        &samples[pair.0],
        &samples[pair.1],
        Mode::Train { eps_seed },
    )?;
    let loss = super::loss(&mut tape, out.logits, samples[pair.1].label, out.kld, beta)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        let culprit = tape
            .first_non_finite()
            .map_or_else(|| "unknown".to_string(), |(node, op)| format!("{op} (node {node})"));
        return Err(Error::model(format!(
            "training aborted: non-finite loss, first produced by {culprit}"
        )));
    }
    tape.backward(loss)?;
    let grads = out
        .params
        .iter()
        .map(|(name, id)| {
            let g = tape
                .grad(*id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.shape(*id)));
            (name.clone(), g)
        })
        .collect();
    Ok((value, grads))
}

/// Evaluates one batch of (previous, current) index pairs.
///
/// # Errors
/// Propagates the first sample failure in batch order; a non-finite loss
/// aborts with the op that produced it.
pub fn batch_gradients(
    model: &Model,
    samples: &[AlignedSample],
    batch: &[(usize, usize)],
    beta: f64,
    eps_seeds: &[u64],
    jobs: usize,
) -> Result<BatchGrad> {
    debug_assert_eq!(batch.len(), eps_seeds.len());
    let items: Vec<((usize, usize), u64)> =
        batch.iter().copied().zip(eps_seeds.iter().copied()).collect();
    let results = ordered_map(&items, jobs, |(pair, eps_seed)| {
        sample_gradient(model, samples, *pair, beta, *eps_seed)
    });
    let mut sample_losses = Vec::with_capacity(batch.len());
    let mut grads: Vec<(String, Tensor)> = Vec::new();
    for result in results {
        let (loss_value, sample_grads) = result?;
        sample_losses.push(loss_value);
        if grads.is_empty() {
            grads = sample_grads;
        } else {
            for ((_, total), (_, g)) in grads.iter_mut().zip(&sample_grads) {
                for (t, v) in total.data_mut().iter_mut().zip(g.data()) {
                    *t += v;
                }
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for (_, g) in &mut grads {
        for v in g.data_mut() {
            *v *= inv;
        }
    }
    Ok(BatchGrad { sample_losses, grads })
}

/// Trains `model` in place on the given pairs, returning per-epoch mean loss.
///
/// All randomness (shuffling, latent noise) derives from `fold_seed`, and the
/// KL weight ramps linearly over the warm-up so the very first step optimizes
/// pure cross-entropy.
///
/// # Errors
/// Fails on fewer than two training pairs or a non-finite loss.
pub fn train_fold(
    model: &mut Model,
    samples: &[AlignedSample],
    pairs: &[(usize, usize)],
    cfg: &TrainConfig,
    fold_seed: u64,
    jobs: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if pairs.len() < 2 {
        return Err(Error::data(format!(
            "training needs at least 2 samples, window holds {}",
            pairs.len()
        )));
    }
    let batches_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let warmup = cfg.warmup_steps.unwrap_or(total_steps / 10).max(1);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sub_seed(fold_seed, "shuffle"));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        let mut order: Vec<(usize, usize)> = pairs.to_vec();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let beta = cfg.kld_weight * (step as f64 / warmup as f64).min(1.0);
            let eps_seeds: Vec<u64> = (0..batch.len())
                .map(|slot| sub_seed(fold_seed, &format!("eps.{step}.{slot}")))
                .collect();
            let mut out = batch_gradients(model, samples, batch, beta, &eps_seeds, jobs)?;
            epoch_loss += out.sample_losses.iter().sum::<f64>();
            clip_global_norm(&mut out.grads, cfg.clip_norm);
            adam.apply(&mut model.params, &out.grads)?;
            step += 1;
        }
        curve.push(epoch_loss / pairs.len() as f64);
    }
    Ok(curve)
}

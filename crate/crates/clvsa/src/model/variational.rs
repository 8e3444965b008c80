//! Variational latent read-out over decoder states.
//!
//! The prior sees only the forward pass (the attended decoder states); the
//! posterior additionally sees a backward recurrence over the same states, so
//! during training it can encode what the rest of the day implied. The KL
//! term pulls the two together, which is what regularizes the forward-only
//! prior the model must rely on when predicting.
//!
//! Posterior weights start as a copy of the prior weights with the backward
//! block zeroed, so the divergence is exactly zero before the first update.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tapegrad::{Tensor, VarId};

use super::blocks::Ctx;
use super::params::{uniform_init, ParamStore};
use crate::error::{Error, Result};

/// Whether a forward pass samples the latent or takes its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    /// Sample `z = mu + exp(logvar / 2) * eps` from the posterior.
    Sample,
    /// Deterministic mean, posterior when backward states exist, prior
    /// otherwise.
    Mean,
}

/// Latent path output for one sample.
pub struct LatentOut {
    /// Per-step latent values `[T, latent]`.
    pub z: VarId,
    /// KL divergence between posterior and prior, a scalar. `None` when the
    /// pass ran without backward states (prediction on the forward pass
    /// alone).
    pub kld: Option<VarId>,
}

/// Backward tanh recurrence producing the posterior's extra evidence.
#[derive(Debug, Clone)]
pub struct BackwardRnnSpec {
    pub name: String,
    pub hidden: usize,
    pub latent: usize,
}

impl BackwardRnnSpec {
    pub fn param_count(&self) -> usize {
        self.hidden * self.latent + self.latent * self.latent + self.latent
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        store.insert(
            &format!("{}.w_in", self.name),
            uniform_init(rng, &[self.hidden, self.latent], self.hidden),
        )?;
        store.insert(
            &format!("{}.u", self.name),
            uniform_init(rng, &[self.latent, self.latent], self.latent),
        )?;
        store.insert(
            &format!("{}.b", self.name),
            uniform_init(rng, &[1, self.latent], self.hidden),
        )?;
        Ok(())
    }

    /// Runs right-to-left over `states` `[T, hidden]`, returning `[T, latent]`
    /// where row τ summarizes steps τ..T.
    ///
    /// # Errors
    /// Fails on shape mismatches.
    pub fn apply(&self, ctx: &mut Ctx, states: VarId) -> Result<VarId> {
        let t = ctx.tape.shape(states)[0];
        let w_in = ctx.p(&format!("{}.w_in", self.name))?;
        let u = ctx.p(&format!("{}.u", self.name))?;
        let b = ctx.p(&format!("{}.b", self.name))?;
        let mut prev = ctx.constant(Tensor::zeros(&[1, self.latent]));
        let mut rows = vec![prev; t];
        for tau in (0..t).rev() {
            let d = ctx.tape.slice(states, 0, tau, 1)?;
            let fed = ctx.tape.matmul(d, w_in)?;
            let carried = ctx.tape.matmul(prev, u)?;
            let lin = ctx.tape.add(fed, carried)?;
            let biased = ctx.tape.add(lin, b)?;
            prev = ctx.tape.tanh(biased);
            rows[tau] = prev;
        }
        Ok(ctx.tape.concat(&rows, 0)?)
    }
}

/// Prior and posterior heads plus the sampling rule.
#[derive(Debug, Clone)]
pub struct LatentSpec {
    pub name: String,
    pub hidden: usize,
    pub latent: usize,
}

impl LatentSpec {
    pub fn backward(&self) -> BackwardRnnSpec {
        BackwardRnnSpec {
            name: format!("{}.bwd", self.name),
            hidden: self.hidden,
            latent: self.latent,
        }
    }

    pub fn param_count(&self) -> usize {
        let prior = 2 * (self.hidden * self.latent + self.latent);
        let posterior = 2 * ((self.hidden + self.latent) * self.latent + self.latent);
        prior + posterior + self.backward().param_count()
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        self.backward().register(store, rng)?;
        let mut prior_w = Vec::new();
        for head in ["mu", "logvar"] {
            let w = uniform_init(rng, &[self.hidden, self.latent], self.hidden);
            let b = uniform_init(rng, &[1, self.latent], self.hidden);
            store.insert(&format!("{}.prior.{head}.w", self.name), w.clone())?;
            store.insert(&format!("{}.prior.{head}.b", self.name), b.clone())?;
            prior_w.push((w, b));
        }
        // The posterior input is [states | backward]; copying the prior block
        // and zeroing the backward block makes both heads agree exactly at
        // init, so the KL penalty starts at zero.
        for (head, (w, b)) in ["mu", "logvar"].iter().zip(prior_w) {
            let mut wq = Tensor::zeros(&[self.hidden + self.latent, self.latent]);
            wq.data_mut()[..self.hidden * self.latent].copy_from_slice(w.data());
            store.insert(&format!("{}.post.{head}.w", self.name), wq)?;
            store.insert(&format!("{}.post.{head}.b", self.name), b)?;
        }
        Ok(())
    }

    fn head(&self, ctx: &mut Ctx, input: VarId, which: &str) -> Result<(VarId, VarId)> {
        let mut out = [None, None];
        for (slot, head) in ["mu", "logvar"].iter().enumerate() {
            let w = ctx.p(&format!("{}.{which}.{head}.w", self.name))?;
            let b = ctx.p(&format!("{}.{which}.{head}.b", self.name))?;
            let lin = ctx.tape.matmul(input, w)?;
            out[slot] = Some(ctx.tape.add(lin, b)?);
        }
        Ok((out[0].unwrap(), out[1].unwrap()))
    }

    /// Runs the latent path over decoder states `[T, hidden]`.
    ///
    /// `backward` carries the backward recurrence output when the full day is
    /// visible. Sampling requires it; without it the mean pass falls back to
    /// the prior.
    ///
    /// # Errors
    /// Fails when asked to sample without backward states, or on shape
    /// mismatches.
    pub fn apply(
        &self,
        ctx: &mut Ctx,
        states: VarId,
        backward: Option<VarId>,
        mode: LatentMode,
        eps_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<LatentOut> {
        let t = ctx.tape.shape(states)[0];
        let (mu_p, lv_p) = self.head(ctx, states, "prior")?;
        let (z, kld) = match backward {
            Some(bwd) => {
                let joint = ctx.tape.concat(&[states, bwd], 1)?;
                let (mu_q, lv_q) = self.head(ctx, joint, "post")?;
                let kld = ctx.tape.gaussian_kl(mu_q, lv_q, mu_p, lv_p)?;
                let z = match mode {
                    LatentMode::Mean => mu_q,
                    LatentMode::Sample => {
                        let rng = eps_rng.ok_or_else(|| {
                            Error::model("latent sampling needs a noise stream")
                        })?;
                        let mut eps = Tensor::zeros(&[t, self.latent]);
                        for v in eps.data_mut() {
                            *v = StandardNormal.sample(rng);
                        }
                        let eps = ctx.constant(eps);
                        let half_lv = ctx.tape.scale(lv_q, 0.5);
                        let sigma = ctx.tape.exp(half_lv);
                        let noise = ctx.tape.mul(sigma, eps)?;
                        ctx.tape.add(mu_q, noise)?
                    }
                };
                (z, Some(kld))
            }
            None => match mode {
                LatentMode::Mean => (mu_p, None),
                LatentMode::Sample => {
                    return Err(Error::model(
                        "latent sampling requires backward states; mean mode predicts without them",
                    ));
                }
            },
        };
        Ok(LatentOut { z, kld })
    }
}

//! Building blocks: grouped feature convolution, convolutional LSTM,
//! scaled-dot self-attention, additive inter-attention and dense layers.
//!
//! Every block declares its parameters through a spec struct that both
//! registers the tensors at init time and binds them at forward time, so the
//! two sides can never drift apart. Forward methods operate on a [`Ctx`]
//! holding the sample's tape and the shared parameter store.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use tapegrad::{Tape, Tensor, VarId};

use super::params::{uniform_init, ParamStore};
use crate::error::{Error, Result};

/// Forward-pass context: one tape per sample plus lazily bound parameters.
pub struct Ctx<'t, 's> {
    pub tape: &'t mut Tape,
    store: &'s ParamStore,
    bound: Vec<(String, VarId)>,
}

impl<'t, 's> Ctx<'t, 's> {
    pub fn new(tape: &'t mut Tape, store: &'s ParamStore) -> Self {
        Self { tape, store, bound: Vec::new() }
    }

    /// Binds a named parameter onto the tape, once per name.
    ///
    /// # Errors
    /// Fails when the store does not know `name`.
    pub fn p(&mut self, name: &str) -> Result<VarId> {
        if let Some((_, id)) = self.bound.iter().find(|(n, _)| n == name) {
            return Ok(*id);
        }
        let id = self.tape.param(self.store.get(name)?.clone());
        self.bound.push((name.to_string(), id));
        Ok(id)
    }

    /// Constant (non-trainable) tensor on the tape.
    pub fn constant(&mut self, t: Tensor) -> VarId {
        self.tape.leaf(t)
    }

    /// Parameters bound so far, in first-use order.
    pub fn bound(&self) -> &[(String, VarId)] {
        &self.bound
    }

    /// Gradients of every bound parameter after a backward pass; parameters
    /// that never received a contribution yield zeros.
    pub fn grads(&self) -> Vec<(String, Tensor)> {
        self.bound
            .iter()
            .map(|(name, id)| {
                let g = self
                    .tape
                    .grad(*id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.tape.shape(*id)));
                (name.clone(), g)
            })
            .collect()
    }
}

// ---- grouped feature convolution --------------------------------------------

/// 1-D convolution bank over a feature frame, one kernel set per row group.
///
/// Related series (the four prices) share a joint convolution; unrelated ones
/// get their own, which is what keeps the parameter count below one bank over
/// the full frame.
#[derive(Debug, Clone)]
pub struct GroupedConvSpec {
    pub name: String,
    pub groups: Vec<Range<usize>>,
    pub channels_per_group: usize,
    pub width: usize,
}

impl GroupedConvSpec {
    /// Output channel count.
    pub fn out_channels(&self) -> usize {
        self.groups.len() * self.channels_per_group
    }

    pub fn param_count(&self) -> usize {
        self.groups
            .iter()
            .map(|g| self.channels_per_group * (g.len() * self.width + 1))
            .sum()
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        for (gi, group) in self.groups.iter().enumerate() {
            let fan_in = group.len() * self.width;
            store.insert(
                &format!("{}.g{gi}.kernel", self.name),
                uniform_init(rng, &[self.channels_per_group, group.len(), self.width], fan_in),
            )?;
            store.insert(
                &format!("{}.g{gi}.bias", self.name),
                uniform_init(rng, &[self.channels_per_group, 1], fan_in),
            )?;
        }
        Ok(())
    }

    /// Applies the bank to `frame` `[rows, T]`, returning `[out_channels, T]`
    /// after a tanh.
    ///
    /// # Errors
    /// Fails when the grouping does not cover the frame's rows.
    pub fn apply(&self, ctx: &mut Ctx, frame: VarId) -> Result<VarId> {
        let rows = ctx.tape.shape(frame)[0];
        let covered = self.groups.iter().map(|g| g.len()).sum::<usize>();
        let max_row = self.groups.iter().map(|g| g.end).max().unwrap_or(0);
        if covered != rows || max_row != rows {
            return Err(Error::config(format!(
                "feature grouping covers {covered} rows ending at {max_row}, frame has {rows}"
            )));
        }
        let pad = (self.width - 1) / 2;
        let mut outs = Vec::with_capacity(self.groups.len());
        for (gi, group) in self.groups.iter().enumerate() {
            let x = ctx.tape.slice(frame, 0, group.start, group.len())?;
            let kernel = ctx.p(&format!("{}.g{gi}.kernel", self.name))?;
            let bias = ctx.p(&format!("{}.g{gi}.bias", self.name))?;
            let y = ctx.tape.conv1d(x, kernel, 1, pad)?;
            outs.push(ctx.tape.add(y, bias)?);
        }
        let all = ctx.tape.concat(&outs, 0)?;
        Ok(ctx.tape.tanh(all))
    }
}

/// Standard row grouping for a trading frame: one joint group for the four
/// price series, then one group per remaining series (volume, indicators).
pub fn trading_groups(rows: usize) -> Vec<Range<usize>> {
    let mut groups = vec![0..4];
    for r in 4..rows {
        groups.push(r..r + 1);
    }
    groups
}

/// Each sentiment series (four indices plus buzz) gets its own group.
pub fn singleton_groups(start: usize, rows: usize) -> Vec<Range<usize>> {
    (start..start + rows).map(|r| r..r + 1).collect()
}

// ---- convolutional LSTM ------------------------------------------------------

/// One ConvLSTM layer: gates are width-preserving 1-D convolutions over the
/// state width, in gate order input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct ConvLstmSpec {
    pub name: String,
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub width: usize,
    pub kernel_width: usize,
}

impl ConvLstmSpec {
    pub fn param_count(&self) -> usize {
        let hc = self.hidden_channels;
        4 * hc * self.in_channels * self.kernel_width
            + 4 * hc * hc * self.kernel_width
            + 4 * hc
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let hc = self.hidden_channels;
        let fan_x = self.in_channels * self.kernel_width;
        let fan_h = hc * self.kernel_width;
        store.insert(
            &format!("{}.wx", self.name),
            uniform_init(rng, &[4 * hc, self.in_channels, self.kernel_width], fan_x),
        )?;
        store.insert(
            &format!("{}.wh", self.name),
            uniform_init(rng, &[4 * hc, hc, self.kernel_width], fan_h),
        )?;
        let mut bias = uniform_init(rng, &[4 * hc, 1], fan_x);
        // Unit forget-gate bias keeps early memory open.
        for f in hc..2 * hc {
            bias.data_mut()[f] = 1.0;
        }
        store.insert(&format!("{}.b", self.name), bias)?;
        Ok(())
    }

    /// Zero initial state pair on the tape.
    pub fn zero_state(&self, ctx: &mut Ctx) -> (VarId, VarId) {
        let h = ctx.constant(Tensor::zeros(&[self.hidden_channels, self.width]));
        let c = ctx.constant(Tensor::zeros(&[self.hidden_channels, self.width]));
        (h, c)
    }

    /// One recurrence step: `x` is `[in_channels, width]`, state tensors are
    /// `[hidden_channels, width]`.
    ///
    /// # Errors
    /// Fails on shape mismatches.
    pub fn step(&self, ctx: &mut Ctx, x: VarId, h: VarId, c: VarId) -> Result<(VarId, VarId)> {
        let hc = self.hidden_channels;
        let pad = (self.kernel_width - 1) / 2;
        let wx = ctx.p(&format!("{}.wx", self.name))?;
        let wh = ctx.p(&format!("{}.wh", self.name))?;
        let b = ctx.p(&format!("{}.b", self.name))?;
        let gx = ctx.tape.conv1d(x, wx, 1, pad)?;
        let gh = ctx.tape.conv1d(h, wh, 1, pad)?;
        let lin = ctx.tape.add(gx, gh)?;
        let gates = ctx.tape.add(lin, b)?;
        let i_pre = ctx.tape.slice(gates, 0, 0, hc)?;
        let f_pre = ctx.tape.slice(gates, 0, hc, hc)?;
        let g_pre = ctx.tape.slice(gates, 0, 2 * hc, hc)?;
        let o_pre = ctx.tape.slice(gates, 0, 3 * hc, hc)?;
        let i = ctx.tape.sigmoid(i_pre);
        let f = ctx.tape.sigmoid(f_pre);
        let g = ctx.tape.tanh(g_pre);
        let o = ctx.tape.sigmoid(o_pre);
        let keep = ctx.tape.mul(f, c)?;
        let write = ctx.tape.mul(i, g)?;
        let c_next = ctx.tape.add(keep, write)?;
        let c_act = ctx.tape.tanh(c_next);
        let h_next = ctx.tape.mul(o, c_act)?;
        Ok((h_next, c_next))
    }

    /// Runs the layer over a step sequence, returning per-step hidden states
    /// and the final (h, c).
    ///
    /// # Errors
    /// Fails on shape mismatches.
    pub fn run(
        &self,
        ctx: &mut Ctx,
        inputs: &[VarId],
        init: Option<(VarId, VarId)>,
    ) -> Result<(Vec<VarId>, (VarId, VarId))> {
        let (mut h, mut c) = match init {
            Some(state) => state,
            None => self.zero_state(ctx),
        };
        let mut states = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let (hn, cn) = self.step(ctx, x, h, c)?;
            h = hn;
            c = cn;
            states.push(h);
        }
        Ok((states, (h, c)))
    }
}

/// Left-padded sliding windows over conv features `[C, T]`: step τ sees the
/// `width` most recent columns, zero-filled before the day starts.
///
/// # Errors
/// Fails on shape mismatches.
pub fn feature_windows(ctx: &mut Ctx, feat: VarId, width: usize) -> Result<Vec<VarId>> {
    let shape = ctx.tape.shape(feat).to_vec();
    let (c, t) = (shape[0], shape[1]);
    let mut out = Vec::with_capacity(t);
    for tau in 0..t {
        let have = (tau + 1).min(width);
        let window = if have == width {
            ctx.tape.slice(feat, 1, tau + 1 - width, width)?
        } else {
            let zeros = ctx.constant(Tensor::zeros(&[c, width - have]));
            let seen = ctx.tape.slice(feat, 1, 0, have)?;
            ctx.tape.concat(&[zeros, seen], 1)?
        };
        out.push(window);
    }
    Ok(out)
}

/// Stacks per-step states `[hc, w]` into a sequence matrix `[T, hc·w]`.
///
/// # Errors
/// Fails on shape mismatches.
pub fn stack_states(ctx: &mut Ctx, states: &[VarId]) -> Result<VarId> {
    let numel: usize = ctx.tape.shape(states[0]).iter().product();
    let rows: Vec<VarId> = states
        .iter()
        .map(|&s| ctx.tape.reshape(s, &[1, numel]))
        .collect::<std::result::Result<_, _>>()?;
    Ok(ctx.tape.concat(&rows, 0)?)
}

// ---- attention ---------------------------------------------------------------

/// Scaled dot-product self-attention with a residual connection.
#[derive(Debug, Clone)]
pub struct SelfAttnSpec {
    pub name: String,
    pub hidden: usize,
}

impl SelfAttnSpec {
    pub fn param_count(&self) -> usize {
        3 * self.hidden * self.hidden
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        for w in ["wq", "wk", "wv"] {
            store.insert(
                &format!("{}.{w}", self.name),
                uniform_init(rng, &[self.hidden, self.hidden], self.hidden),
            )?;
        }
        Ok(())
    }

    /// `states` is `[T, hidden]`; output has the same shape and adds the
    /// attended values residually. Attention rows are softmax-normalized.
    ///
    /// # Errors
    /// Fails on shape mismatches.
    pub fn apply(&self, ctx: &mut Ctx, states: VarId) -> Result<VarId> {
        let wq = ctx.p(&format!("{}.wq", self.name))?;
        let wk = ctx.p(&format!("{}.wk", self.name))?;
        let wv = ctx.p(&format!("{}.wv", self.name))?;
        let q = ctx.tape.matmul(states, wq)?;
        let k = ctx.tape.matmul(states, wk)?;
        let v = ctx.tape.matmul(states, wv)?;
        let kt = ctx.tape.transpose(k)?;
        let scores_raw = ctx.tape.matmul(q, kt)?;
        let scores = ctx.tape.scale(scores_raw, 1.0 / (self.hidden as f64).sqrt());
        let attn = ctx.tape.softmax(scores, 1)?;
        let mixed = ctx.tape.matmul(attn, v)?;
        Ok(ctx.tape.add(states, mixed)?)
    }
}

/// Additive attention from one decoder query over the encoder sequence.
#[derive(Debug, Clone)]
pub struct InterAttnSpec {
    pub name: String,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub dim: usize,
}

impl InterAttnSpec {
    pub fn param_count(&self) -> usize {
        self.dim * (self.enc_hidden + self.dec_hidden + 1)
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        store.insert(
            &format!("{}.w_enc", self.name),
            uniform_init(rng, &[self.enc_hidden, self.dim], self.enc_hidden),
        )?;
        store.insert(
            &format!("{}.w_dec", self.name),
            uniform_init(rng, &[self.dec_hidden, self.dim], self.dec_hidden),
        )?;
        store.insert(&format!("{}.v", self.name), uniform_init(rng, &[self.dim, 1], self.dim))?;
        Ok(())
    }

    /// `enc` is `[Tₑ, enc_hidden]`, `query` is `[1, dec_hidden]`; returns the
    /// context `[1, enc_hidden]` as the attention-weighted encoder mix.
    ///
    /// # Errors
    /// Fails on shape mismatches.
    pub fn apply(&self, ctx: &mut Ctx, enc: VarId, query: VarId) -> Result<VarId> {
        let w_enc = ctx.p(&format!("{}.w_enc", self.name))?;
        let w_dec = ctx.p(&format!("{}.w_dec", self.name))?;
        let v = ctx.p(&format!("{}.v", self.name))?;
        let enc_proj = ctx.tape.matmul(enc, w_enc)?;
        let dec_proj = ctx.tape.matmul(query, w_dec)?;
        let summed = ctx.tape.add(enc_proj, dec_proj)?;
        let act = ctx.tape.tanh(summed);
        let scores = ctx.tape.matmul(act, v)?;
        let scores_row = ctx.tape.transpose(scores)?;
        let weights = ctx.tape.softmax(scores_row, 1)?;
        Ok(ctx.tape.matmul(weights, enc)?)
    }
}

// ---- dense -------------------------------------------------------------------

/// Fully connected layer `[n, fan_in] -> [n, fan_out]` with bias.
#[derive(Debug, Clone)]
pub struct DenseSpec {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl DenseSpec {
    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        store.insert(
            &format!("{}.w", self.name),
            uniform_init(rng, &[self.fan_in, self.fan_out], self.fan_in),
        )?;
        store.insert(
            &format!("{}.b", self.name),
            uniform_init(rng, &[1, self.fan_out], self.fan_in),
        )?;
        Ok(())
    }

    /// # Errors
    /// Fails on shape mismatches.
    pub fn apply(&self, ctx: &mut Ctx, x: VarId) -> Result<VarId> {
        let w = ctx.p(&format!("{}.w", self.name))?;
        let b = ctx.p(&format!("{}.b", self.name))?;
        let y = ctx.tape.matmul(x, w)?;
        Ok(ctx.tape.add(y, b)?)
    }
}

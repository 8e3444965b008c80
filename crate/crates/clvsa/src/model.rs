//! Forecasting models over aligned day frames.
//!
//! Four variants share one building-block vocabulary:
//!
//! * `lstm_s`: a plain ConvLSTM stack over the concatenated previous/current
//!   day, no attention, no latent path. The floor any richer variant has to
//!   beat.
//! * `clvsa`: trading channel only. Grouped feature convolution, ConvLSTM
//!   encoder over the previous day and decoder over the current day,
//!   inter-attention between them, self-attention within, and a variational
//!   latent read-out.
//! * `clvsa_input_fusion`: same single channel, but sentiment rows are
//!   stacked into the trading frame before the convolution. The cheap way to
//!   use sentiment, and the ablation the dual variant is measured against.
//! * `dual_clvsa`: one full channel per frame, fused at the summary level.
//!   Only the trading channel carries the latent path (and thus the KLD
//!   term); the sentiment channel contributes a deterministic summary unless
//!   `sentiment_latent` turns sampling on for it too.

pub mod blocks;
pub mod forward;
pub mod params;
pub mod variational;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which architecture to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    LstmS,
    Clvsa,
    ClvsaInputFusion,
    DualClvsa,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::LstmS, Variant::Clvsa, Variant::ClvsaInputFusion, Variant::DualClvsa];

    /// Whether the variant can only work with `use_sentiment` on.
    pub fn requires_sentiment(self) -> bool {
        matches!(self, Variant::ClvsaInputFusion | Variant::DualClvsa)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::LstmS => "lstm_s",
            Variant::Clvsa => "clvsa",
            Variant::ClvsaInputFusion => "clvsa_input_fusion",
            Variant::DualClvsa => "dual_clvsa",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm_s" => Ok(Variant::LstmS),
            "clvsa" => Ok(Variant::Clvsa),
            "clvsa_input_fusion" => Ok(Variant::ClvsaInputFusion),
            "dual_clvsa" => Ok(Variant::DualClvsa),
            other => Err(Error::config(format!(
                "unknown variant {other:?}; expected lstm_s, clvsa, clvsa_input_fusion or dual_clvsa"
            ))),
        }
    }
}

/// Architecture hyper-parameters.
///
/// `hidden` is the flattened recurrent state size; each ConvLSTM carries it
/// as `hidden / window` channels across `window` spatial positions, so
/// `hidden` must divide evenly. The feature flags select the input mix:
/// `use_indicators` widens the trading frame with derived rows, and
/// `use_sentiment` routes the sentiment frame into whichever place the
/// variant has for it (extra input rows for `lstm_s` and
/// `clvsa_input_fusion`, the second channel for `dual_clvsa`).
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub variant: Variant,
    pub use_indicators: bool,
    pub use_sentiment: bool,
    pub layers: usize,
    pub hidden: usize,
    pub window: usize,
    pub conv_width: usize,
    pub channels_per_group: usize,
    pub latent: usize,
    pub dense_hidden: usize,
    /// Number of movement classes; the pipeline labels down/flat/up.
    pub classes: usize,
    /// Attention head count. Single-head only; the knob exists so configs
    /// can state it explicitly and anything else is rejected early.
    pub attention_heads: usize,
    /// Sampling path on the sentiment channel of `dual_clvsa`. Off by
    /// default: the sentiment summary stays deterministic and the KLD term
    /// comes from the trading channel alone either way.
    pub sentiment_latent: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Clvsa,
            use_indicators: false,
            use_sentiment: false,
            layers: 2,
            hidden: 64,
            window: 4,
            conv_width: 3,
            channels_per_group: 16,
            latent: 16,
            dense_hidden: 128,
            classes: crate::data::N_CLASSES,
            attention_heads: 1,
            sentiment_latent: false,
        }
    }
}

impl ModelConfig {
    /// Hidden channels per ConvLSTM position.
    pub fn hidden_channels(&self) -> usize {
        self.hidden / self.window
    }

    /// Rows expected in the trading frame: OHLCV plus indicator rows.
    pub fn trading_rows(&self) -> usize {
        if self.use_indicators {
            10
        } else {
            5
        }
    }

    /// # Errors
    /// Fails on an inconsistent combination.
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("layers must be at least 1"));
        }
        if self.hidden == 0 || self.window == 0 {
            return Err(Error::config("hidden and window must be positive"));
        }
        if self.hidden % self.window != 0 {
            return Err(Error::config(format!(
                "hidden ({}) must be divisible by window ({})",
                self.hidden, self.window
            )));
        }
        if self.conv_width % 2 == 0 {
            return Err(Error::config(format!(
                "conv_width must be odd to preserve width, got {}",
                self.conv_width
            )));
        }
        if self.channels_per_group == 0 {
            return Err(Error::config("channels_per_group must be positive"));
        }
        if self.latent == 0 {
            return Err(Error::config("latent must be positive"));
        }
        if self.dense_hidden == 0 {
            return Err(Error::config("dense_hidden must be positive"));
        }
        if self.classes != crate::data::N_CLASSES {
            return Err(Error::config(format!(
                "labels are ternary; classes must be {}, got {}",
                crate::data::N_CLASSES,
                self.classes
            )));
        }
        if self.attention_heads != 1 {
            return Err(Error::config(format!(
                "multi-head attention is out of scope; attention_heads must be 1, got {}",
                self.attention_heads
            )));
        }
        if self.variant.requires_sentiment() && !self.use_sentiment {
            return Err(Error::config(format!(
                "variant {} needs sentiment features enabled",
                self.variant
            )));
        }
        if self.variant == Variant::Clvsa && self.use_sentiment {
            return Err(Error::config(
                "the single-channel variant has no place for sentiment; \
                 use clvsa_input_fusion or dual_clvsa",
            ));
        }
        if self.sentiment_latent && self.variant != Variant::DualClvsa {
            return Err(Error::config(
                "sentiment_latent only applies to the dual_clvsa variant",
            ));
        }
        Ok(())
    }
}

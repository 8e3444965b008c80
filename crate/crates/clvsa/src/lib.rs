//! Dual-channel sentiment-fusion forecasting pipeline.
//!
//! The library turns intraday OHLCV bars and aggregated market-sentiment
//! indices into per-day feature frames, trains a family of recurrent
//! sequence-to-sequence classifiers on consecutive-day pairs, and evaluates
//! the resulting direction forecasts with a trading backtest.
//!
//! The pieces, in pipeline order:
//!
//! - [`data`]: sentiment index math, bar/sentiment alignment, day framing,
//!   technical indicators, a synthetic generator with a plantable signal, and
//!   CSV formats for everything.
//! - [`model`]: the four classifier variants (stacked LSTM baseline,
//!   single-channel and dual-channel encoder-decoder models with attention
//!   and a variational latent path) built on the `tapegrad` tape.
//! - [`train`]: Adam with gradient clipping, KL warm-up, walk-forward
//!   evaluation over calendar months, and ranking metrics.
//! - [`backtest`]: signal-to-position mapping, equity simulation, Sharpe and
//!   regression-alpha metrics, periodic reports.
//! - [`exec`]: the sample-level parallelism switch (rayon when the `parallel`
//!   feature is on, sequential otherwise) with identical results either way.
//!
//! Everything is deterministic given a seed: RNGs are ChaCha8 streams derived
//! via [`util::sub_seed`], parallel maps preserve input order, and floats are
//! serialized with shortest-round-trip formatting.

pub mod backtest;
pub mod cli;
pub mod data;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod model;
pub mod train;
pub mod util;

pub use error::{Error, Result};

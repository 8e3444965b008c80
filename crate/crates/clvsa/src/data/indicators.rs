//! Technical indicators computed over close prices.
//!
//! Five features per bar: SMA(10), EMA(10), RSI(14), MACD(12, 26, 9) reported
//! as the histogram (line minus signal), and %B with a 20-bar window and 2
//! standard deviations. EMAs seed with the first observation; SMA and the
//! Bollinger window shrink to the available prefix. All values are therefore
//! defined from the first bar, but early rows are dominated by seeding, so
//! the first [`WARMUP`] rows are flagged for exclusion from training samples.

use super::Bar;
use crate::error::{Error, Result};

/// Rows before this index are warm-up; the slow MACD EMA spans 26 bars.
pub const WARMUP: usize = 26;

pub const SMA_PERIOD: usize = 10;
pub const EMA_PERIOD: usize = 10;
pub const RSI_PERIOD: usize = 14;
pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const MACD_SIGNAL: usize = 9;
pub const BOLLINGER_PERIOD: usize = 20;
pub const BOLLINGER_WIDTH: f64 = 2.0;

/// Indicator values for one bar, in frame row order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorRow {
    pub sma: f64,
    pub ema: f64,
    pub rsi: f64,
    pub macd: f64,
    pub percent_b: f64,
}

impl IndicatorRow {
    pub fn as_array(&self) -> [f64; 5] {
        [self.sma, self.ema, self.rsi, self.macd, self.percent_b]
    }
}

struct Ema {
    alpha: f64,
    value: Option<f64>,
}

impl Ema {
    fn new(period: usize) -> Self {
        Self { alpha: 2.0 / (period as f64 + 1.0), value: None }
    }

    fn update(&mut self, x: f64) -> f64 {
        let v = match self.value {
            None => x,
            Some(prev) => prev + self.alpha * (x - prev),
        };
        self.value = Some(v);
        v
    }
}

/// Computes all five indicators for every bar.
///
/// The output has one row per input bar; callers exclude the first [`WARMUP`]
/// rows from model samples.
///
/// # Errors
/// Fails when fewer than `WARMUP + 1` bars are supplied, since no row would
/// survive the warm-up cut.
pub fn compute_indicators(bars: &[Bar]) -> Result<Vec<IndicatorRow>> {
    if bars.len() <= WARMUP {
        return Err(Error::data(format!(
            "indicators need more than {WARMUP} bars of warm-up, got {}",
            bars.len()
        )));
    }
    let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let mut out = Vec::with_capacity(closes.len());

    let mut ema10 = Ema::new(EMA_PERIOD);
    let mut ema_fast = Ema::new(MACD_FAST);
    let mut ema_slow = Ema::new(MACD_SLOW);
    let mut ema_signal = Ema::new(MACD_SIGNAL);

    // Wilder smoothing state for RSI.
    let mut avg_gain = 0.0;
    let mut avg_loss = 0.0;

    for (t, &close) in closes.iter().enumerate() {
        // SMA over the trailing window, shrunk while the prefix is short.
        let lo = t.saturating_sub(SMA_PERIOD - 1);
        let sma = closes[lo..=t].iter().sum::<f64>() / (t - lo + 1) as f64;

        let ema = ema10.update(close);

        let rsi = if t == 0 {
            50.0
        } else {
            let delta = close - closes[t - 1];
            let (gain, loss) = (delta.max(0.0), (-delta).max(0.0));
            if t <= RSI_PERIOD {
                // Seed phase: plain mean of the deltas so far.
                let w = t as f64;
                avg_gain = (avg_gain * (w - 1.0) + gain) / w;
                avg_loss = (avg_loss * (w - 1.0) + loss) / w;
            } else {
                let p = RSI_PERIOD as f64;
                avg_gain = (avg_gain * (p - 1.0) + gain) / p;
                avg_loss = (avg_loss * (p - 1.0) + loss) / p;
            }
            if avg_loss == 0.0 && avg_gain == 0.0 {
                // Flat market convention.
                50.0
            } else if avg_loss == 0.0 {
                100.0
            } else {
                100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
            }
        };

        let macd_line = ema_fast.update(close) - ema_slow.update(close);
        let macd = macd_line - ema_signal.update(macd_line);

        let blo = t.saturating_sub(BOLLINGER_PERIOD - 1);
        let window = &closes[blo..=t];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let var = window.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / window.len() as f64;
        let sd = var.sqrt();
        let percent_b = if sd == 0.0 {
            // Degenerate band convention: mid-band.
            0.5
        } else {
            (close - (mean - BOLLINGER_WIDTH * sd)) / (2.0 * BOLLINGER_WIDTH * sd)
        };

        out.push(IndicatorRow { sma, ema, rsi, macd, percent_b });
    }
    Ok(out)
}

//! Multiplicative profit-and-loss accounting.

use chrono::{DateTime, Utc};

use super::{Direction, Trade};
use crate::error::{Error, Result};

/// Compounds positions against closes into a cumulative-return curve plus the
/// closed trades.
///
/// Index `t` settles in two steps: the position held since `t-1` realizes
/// `pos * (close_t / close_{t-1} - 1)`, then any position change pays
/// `cost_per_side` per side changed (a sign flip pays two). `equity[t]` is
/// the cumulative fraction after both, so the curve starts at 0 under the
/// default zero cost. A position still open when the data ends keeps its
/// realized returns but records no trade; only sign transitions close one.
///
/// # Errors
/// Fails on length mismatch, empty input, a non-positive or non-finite
/// close, or a short losing its entire stake in one interval.
pub fn simulate(
    timestamps: &[DateTime<Utc>],
    positions: &[i8],
    closes: &[f64],
    cost_per_side: f64,
) -> Result<(Vec<f64>, Vec<Trade>)> {
    if positions.len() != closes.len() || timestamps.len() != closes.len() {
        return Err(Error::data(format!(
            "positions ({}), closes ({}), and timestamps ({}) must align",
            positions.len(),
            closes.len(),
            timestamps.len()
        )));
    }
    if closes.is_empty() {
        return Err(Error::data("cannot simulate an empty series"));
    }
    if let Some(bad) = closes.iter().find(|c| !c.is_finite() || **c <= 0.0) {
        return Err(Error::data(format!("closes must be positive and finite, got {bad}")));
    }
    let mut wealth = 1.0;
    let mut equity = Vec::with_capacity(closes.len());
    let mut trades = Vec::new();
    let mut open: Option<usize> = None;
    let mut prev_pos = 0i8;
    for t in 0..closes.len() {
        if t > 0 {
            let step = f64::from(prev_pos) * (closes[t] / closes[t - 1] - 1.0);
            if 1.0 + step <= 0.0 {
                return Err(Error::metric(format!(
                    "position wiped out at {}: interval return {step}",
                    timestamps[t]
                )));
            }
            wealth *= 1.0 + step;
        }
        let pos = positions[t];
        if pos != prev_pos {
            wealth *= 1.0 - cost_per_side * f64::from((pos - prev_pos).abs());
            if let Some(entry) = open.take() {
                let direction =
                    if positions[entry] > 0 { Direction::Long } else { Direction::Short };
                let gross =
                    direction.sign() * (closes[t] - closes[entry]) / closes[entry];
                trades.push(Trade {
                    entry_timestamp: timestamps[entry],
                    entry_price: closes[entry],
                    exit_timestamp: timestamps[t],
                    exit_price: closes[t],
                    direction,
                    ret: gross - 2.0 * cost_per_side,
                });
            }
            if pos != 0 {
                open = Some(t);
            }
            prev_pos = pos;
        }
        equity.push(wealth - 1.0);
    }
    Ok((equity, trades))
}

//! Position accounting and financial metrics over prediction streams.
//!
//! The trading rule is deliberately plain: take the argmax class of each
//! prediction when its score clears a confidence threshold, hold that
//! position until the signal changes, and charge a per-side cost on every
//! position change. Everything downstream is bookkeeping: a multiplicative
//! equity curve, closed-trade records, and the summary metrics (MAP, AAR,
//! Sharpe, Jensen alpha at daily and yearly horizons).

pub mod buzz;
pub mod metrics;
pub mod positions;
pub mod report;
pub mod simulate;

use chrono::{DateTime, NaiveDate, Utc};

pub use buzz::{buzz_stats, BuzzGrouping, BuzzStats};
pub use metrics::{annualized_return, jensen_alpha, sharpe, AlphaScale};
pub use positions::{positions_for_bars, signals_to_positions};
pub use report::{aggregate_report, render_text, run_backtest, BacktestReport};
pub use simulate::simulate;

/// Trading days per year used by every annualization in this module.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Side of a completed trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Long,
    Short,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Long => 1.0,
            Direction::Short => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Long => "long",
            Direction::Short => "short",
        }
    }
}

/// One closed round trip. `ret` is the net fraction
/// `sign * (exit - entry) / entry - 2 * cost_per_side`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub entry_timestamp: DateTime<Utc>,
    pub entry_price: f64,
    pub exit_timestamp: DateTime<Utc>,
    pub exit_price: f64,
    pub direction: Direction,
    pub ret: f64,
}

/// Backtest knobs. Defaults mirror frictionless reporting: no cost, no
/// risk-free drag, benchmark fixed to buy-and-hold of the traded instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Minimum argmax score before a direction is acted on.
    pub threshold: f64,
    /// Cost fraction charged per position side (a flip pays two).
    pub cost_per_side: f64,
    /// Annual risk-free rate; divided by 252 for per-day excess returns.
    pub risk_free_annual: f64,
    /// Inclusive date restriction for sub-period reports.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            threshold: 0.34,
            cost_per_side: 0.0,
            risk_free_annual: 0.0,
            from: None,
            to: None,
        }
    }
}

impl BacktestConfig {
    /// # Errors
    /// Fails on a threshold outside `[0, 1]`, a negative cost, or an
    /// inverted date restriction.
    pub fn validate(&self) -> crate::error::Result<()> {
        use crate::error::Error;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.cost_per_side < 0.0 || !self.cost_per_side.is_finite() {
            return Err(Error::config("cost per side must be finite and >= 0"));
        }
        if !self.risk_free_annual.is_finite() {
            return Err(Error::config("risk-free rate must be finite"));
        }
        if let (Some(from), Some(to)) = (self.from, self.to) {
            if from > to {
                return Err(Error::config(format!("empty period: from {from} is after to {to}")));
            }
        }
        Ok(())
    }
}

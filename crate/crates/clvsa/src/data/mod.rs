//! Market data and sentiment data types plus the preprocessing pipeline.
//!
//! The flow is: raw psychological-state variables are folded into per-record
//! sentiment indices ([`trmi::compute_trmi_from_psychvars`]), records are
//! buzz-weight aggregated onto the bar interval grid
//! ([`trmi::aggregate_trmi`]), bound to bars by right join
//! ([`align::bind_align`]) and finally cut into per-day training frames
//! ([`align::build_day_frames`]).

pub mod align;
pub mod csv_io;
pub mod indicators;
pub mod synthetic;
pub mod trmi;

use chrono::{DateTime, NaiveDate, Utc};
use indexmap::IndexMap;
use tapegrad::Tensor;

use crate::error::{Error, Result};

/// Names of the four sentiment indices, in frame row order.
pub const INDEX_NAMES: [&str; 4] = ["sentiment", "optimism", "fear", "joy"];

/// Number of sentiment feature rows: the four indices plus buzz.
pub const SENTIMENT_FEATURES: usize = 5;

/// Class labels for the direction of the move over the prediction horizon.
pub const LABEL_DOWN: usize = 0;
pub const LABEL_FLAT: usize = 1;
pub const LABEL_UP: usize = 2;
pub const N_CLASSES: usize = 3;

/// One OHLCV bar. Timestamps mark the interval start, UTC.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub timestamp: DateTime<Utc>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Validates price ordering and finiteness.
    ///
    /// # Errors
    /// Fails when `low <= min(open, close) <= max(open, close) <= high` is
    /// violated, any field is non-finite, or a price is non-positive.
    pub fn validate(&self) -> Result<()> {
        let vals = [self.open, self.high, self.low, self.close, self.volume];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite bar at {}", self.timestamp)));
        }
        if self.open <= 0.0 || self.high <= 0.0 || self.low <= 0.0 || self.close <= 0.0 {
            return Err(Error::data(format!("non-positive price at {}", self.timestamp)));
        }
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        if self.low > body_lo || self.high < body_hi {
            return Err(Error::data(format!("inconsistent high/low at {}", self.timestamp)));
        }
        if self.volume < 0.0 {
            return Err(Error::data(format!("negative volume at {}", self.timestamp)));
        }
        Ok(())
    }
}

/// Raw psychological-state variable observations for one timestamp.
#[derive(Debug, Clone)]
pub struct PsychVarRecord {
    pub timestamp: DateTime<Utc>,
    /// Variable name to value; insertion order follows the source column order.
    pub values: IndexMap<String, f64>,
}

/// Polarity table mapping `(index, psychvar)` to +1, -1 or 0.
///
/// A pair absent from the table contributes zero to that index's numerator
/// while its absolute value still counts toward buzz.
#[derive(Debug, Clone, Default)]
pub struct TrmiPolarity {
    entries: IndexMap<(String, String), i8>,
}

impl TrmiPolarity {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts one polarity entry. A 0 keeps the index registered while the
    /// variable contributes nothing to its numerator.
    ///
    /// # Errors
    /// Rejects polarities outside {+1, -1, 0}.
    pub fn insert(&mut self, index: &str, psychvar: &str, polarity: i8) -> Result<()> {
        if !matches!(polarity, -1 | 0 | 1) {
            return Err(Error::data(format!(
                "polarity for ({index}, {psychvar}) must be +1, -1 or 0, got {polarity}"
            )));
        }
        self.entries.insert((index.to_string(), psychvar.to_string()), polarity);
        Ok(())
    }

    /// Signed indicator for a pair; 0 when the pair is not in the table.
    pub fn indicator(&self, index: &str, psychvar: &str) -> i8 {
        *self.entries.get(&(index.to_string(), psychvar.to_string())).unwrap_or(&0)
    }

    /// True when `index` appears in at least one entry.
    pub fn knows_index(&self, index: &str) -> bool {
        self.entries.keys().any(|(i, _)| i == index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &i8)> {
        self.entries.iter()
    }
}

/// Sentiment index values for one timestamp.
///
/// `values` follows [`INDEX_NAMES`] order; `None` marks a missing index.
/// Invariants: `buzz >= 0`, present values lie in `[-1, 1]`, and `buzz == 0`
/// implies every index is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrmiRecord {
    pub timestamp: DateTime<Utc>,
    pub buzz: f64,
    pub values: [Option<f64>; 4],
}

impl TrmiRecord {
    /// Fully-missing record used to pad intervals without sentiment.
    pub fn missing(timestamp: DateTime<Utc>) -> Self {
        Self { timestamp, buzz: 0.0, values: [None; 4] }
    }

    /// Checks the record invariants listed on the type.
    ///
    /// # Errors
    /// Fails on negative or non-finite buzz, out-of-range index values, or a
    /// zero-buzz record that still carries values.
    pub fn validate(&self) -> Result<()> {
        if !self.buzz.is_finite() || self.buzz < 0.0 {
            return Err(Error::data(format!("buzz must be finite and >= 0 at {}", self.timestamp)));
        }
        for (name, v) in INDEX_NAMES.iter().zip(&self.values) {
            if let Some(x) = v {
                if !x.is_finite() || x.abs() > 1.0 + 1e-12 {
                    return Err(Error::data(format!(
                        "index {name} out of [-1, 1] at {}: {x}",
                        self.timestamp
                    )));
                }
            }
        }
        if self.buzz == 0.0 && self.values.iter().any(Option::is_some) {
            return Err(Error::data(format!(
                "zero-buzz record with index values at {}",
                self.timestamp
            )));
        }
        Ok(())
    }

    /// True when the record carries any sentiment content.
    pub fn has_content(&self) -> bool {
        self.buzz > 0.0
    }
}

/// One bar joined with the sentiment aggregated over its interval.
#[derive(Debug, Clone)]
pub struct AlignedRow {
    pub bar: Bar,
    pub sentiment: TrmiRecord,
    /// True when the bar was synthesized by forward-fill rather than observed.
    pub filled: bool,
}

/// One trading day prepared for the models.
///
/// Frames are `[features x intervals]`. Trading features are per-day z-scored
/// OHLCV plus optional indicator rows; sentiment features are the four index
/// values plus buzz, with intervals lacking sentiment carrying exact zeros.
#[derive(Debug, Clone)]
pub struct AlignedSample {
    pub day: NaiveDate,
    pub timestamps: Vec<DateTime<Utc>>,
    pub trading_frame: Tensor,
    pub sentiment_frame: Tensor,
    /// One entry per interval: 1.0 when sentiment was present, else 0.0.
    pub sentiment_mask: Vec<f64>,
    /// Raw (not z-scored) closes, used for labels and backtests.
    pub close_prices: Vec<f64>,
    /// Direction class of the move over the horizon after the day's last bar.
    pub label: usize,
}

impl AlignedSample {
    pub fn intervals(&self) -> usize {
        self.timestamps.len()
    }

    /// Timestamp of the day's final bar; predictions are stamped with it.
    pub fn prediction_timestamp(&self) -> DateTime<Utc> {
        *self.timestamps.last().expect("sample has at least one interval")
    }
}

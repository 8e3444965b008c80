//! Sentiment index computation and interval aggregation.
//!
//! For an asset with psychological-state variables `p` and polarity indicator
//! `I(index, p)` in `{+1, -1, 0}`:
//!
//! ```text
//! buzz        = sum over p of |value(p)|
//! index value = sum over p of I(index, p) * value(p) / buzz
//! ```
//!
//! Buzz sums every variable's magnitude, including variables that no index
//! references, so `|index value| <= 1` always holds. Aggregation onto the bar
//! grid is a buzz-weighted mean per index with buzz itself summed.

use chrono::{DateTime, Utc};

use super::{PsychVarRecord, TrmiPolarity, TrmiRecord, INDEX_NAMES};
use crate::error::{Error, Result};

/// Folds one raw record into the four sentiment indices.
///
/// A record whose variables are all zero (buzz 0) yields a fully-missing
/// record.
///
/// # Errors
/// Fails when the polarity table knows none of the four indices or a value is
/// non-finite.
pub fn compute_trmi_from_psychvars(
    record: &PsychVarRecord,
    polarity: &TrmiPolarity,
) -> Result<TrmiRecord> {
    if !INDEX_NAMES.iter().any(|n| polarity.knows_index(n)) {
        return Err(Error::config("polarity table references none of the sentiment indices"));
    }
    let mut buzz = 0.0;
    for (name, &v) in &record.values {
        if !v.is_finite() {
            return Err(Error::data(format!(
                "non-finite psychvar {name} at {}",
                record.timestamp
            )));
        }
        buzz += v.abs();
    }
    if buzz == 0.0 {
        return Ok(TrmiRecord::missing(record.timestamp));
    }
    let mut values = [None; 4];
    for (slot, index) in INDEX_NAMES.iter().enumerate() {
        if !polarity.knows_index(index) {
            continue;
        }
        let mut num = 0.0;
        for (name, &v) in &record.values {
            num += f64::from(polarity.indicator(index, name)) * v;
        }
        values[slot] = Some(num / buzz);
    }
    let out = TrmiRecord { timestamp: record.timestamp, buzz, values };
    out.validate()?;
    Ok(out)
}

/// Buzz-weighted aggregation of records into a single record at `timestamp`.
///
/// Per index, the mean is taken over records where that index is present,
/// weighted by each record's buzz; buzz aggregates by plain sum. An empty or
/// all-zero-buzz input yields a fully-missing record, and an index carried by
/// no record stays missing.
pub fn aggregate_trmi(records: &[TrmiRecord], timestamp: DateTime<Utc>) -> TrmiRecord {
    let total_buzz: f64 = records.iter().map(|r| r.buzz).sum();
    if total_buzz == 0.0 {
        return TrmiRecord::missing(timestamp);
    }
    let mut values = [None; 4];
    for slot in 0..INDEX_NAMES.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for r in records {
            if let Some(v) = r.values[slot] {
                num += r.buzz * v;
                den += r.buzz;
            }
        }
        if den > 0.0 {
            values[slot] = Some(num / den);
        }
    }
    TrmiRecord { timestamp, buzz: total_buzz, values }
}

/// Groups records into `interval_secs` windows anchored at bar timestamps and
/// aggregates each window.
///
/// `bar_timestamps` must be strictly increasing; records must be sorted by
/// timestamp. Records falling outside every window are dropped (right join
/// semantics: bars drive the grid).
///
/// # Errors
/// Fails when either input is unsorted.
pub fn aggregate_onto_grid(
    records: &[TrmiRecord],
    bar_timestamps: &[DateTime<Utc>],
    interval_secs: i64,
) -> Result<Vec<TrmiRecord>> {
    if bar_timestamps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data("bar timestamps must be strictly increasing".to_string()));
    }
    if records.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err(Error::data("sentiment records must be sorted by timestamp".to_string()));
    }
    let mut out = Vec::with_capacity(bar_timestamps.len());
    let mut i = 0usize;
    for &ts in bar_timestamps {
        let end = ts + chrono::Duration::seconds(interval_secs);
        while i < records.len() && records[i].timestamp < ts {
            i += 1;
        }
        let start = i;
        while i < records.len() && records[i].timestamp < end {
            i += 1;
        }
        out.push(aggregate_trmi(&records[start..i], ts));
    }
    Ok(out)
}

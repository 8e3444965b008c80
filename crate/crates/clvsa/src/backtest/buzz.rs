//! Message-volume distribution summaries.
//!
//! Sparse sentiment feeds show up as buzz histograms squashed against zero:
//! a median of 0 with a large max is the signature of a thinly covered
//! instrument. These five-number summaries per hour of day or per calendar
//! month make that visible without shipping the raw feed around.

use chrono::{Datelike, Timelike};

use crate::data::TrmiRecord;
use crate::error::{Error, Result};

/// Axis the records are grouped along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuzzGrouping {
    HourOfDay,
    CalendarMonth,
}

impl BuzzGrouping {
    pub fn as_str(self) -> &'static str {
        match self {
            BuzzGrouping::HourOfDay => "hour_of_day",
            BuzzGrouping::CalendarMonth => "calendar_month",
        }
    }
}

/// Five-number summary of one group's buzz values.
#[derive(Debug, Clone, PartialEq)]
pub struct BuzzGroup {
    pub group: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Per-group summaries, ordered by group key. Empty groups never appear.
#[derive(Debug, Clone, PartialEq)]
pub struct BuzzStats {
    pub grouping: BuzzGrouping,
    pub groups: Vec<BuzzGroup>,
}

/// Linear-interpolation quantile of an ascending slice: index `q * (n - 1)`
/// split into its floor neighbor and fractional remainder.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Buzz five-number summaries grouped by hour of day or calendar month.
/// Missing-sentiment records participate with buzz 0; that zero mass is the
/// whole point of the summary.
///
/// # Errors
/// Fails on an empty record list.
pub fn buzz_stats(records: &[TrmiRecord], grouping: BuzzGrouping) -> Result<BuzzStats> {
    if records.is_empty() {
        return Err(Error::data("buzz statistics need at least one record"));
    }
    let mut by_group = std::collections::BTreeMap::<String, Vec<f64>>::new();
    for r in records {
        let key = match grouping {
            BuzzGrouping::HourOfDay => format!("{:02}", r.timestamp.hour()),
            BuzzGrouping::CalendarMonth => {
                format!("{:04}-{:02}", r.timestamp.year(), r.timestamp.month())
            }
        };
        by_group.entry(key).or_default().push(r.buzz);
    }
    let groups = by_group
        .into_iter()
        .map(|(group, mut xs)| {
            xs.sort_by(f64::total_cmp);
            BuzzGroup {
                group,
                min: xs[0],
                q1: quantile(&xs, 0.25),
                median: quantile(&xs, 0.5),
                q3: quantile(&xs, 0.75),
                max: xs[xs.len() - 1],
            }
        })
        .collect();
    Ok(BuzzStats { grouping, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn record(month: u32, hour: u32, buzz: f64) -> TrmiRecord {
        let ts = Utc.with_ymd_and_hms(2021, month, 3, hour, 15, 0).unwrap();
        if buzz == 0.0 {
            TrmiRecord::missing(ts)
        } else {
            TrmiRecord { timestamp: ts, buzz, values: [Some(0.1), None, None, None] }
        }
    }

    #[test]
    fn constant_buzz_collapses_every_quartile() {
        let records: Vec<_> = (0..8).map(|h| record(1, h, 5.0)).collect();
        let stats = buzz_stats(&records, BuzzGrouping::CalendarMonth).unwrap();
        assert_eq!(stats.groups.len(), 1);
        let g = &stats.groups[0];
        assert_eq!((g.min, g.q1, g.median, g.q3, g.max), (5.0, 5.0, 5.0, 5.0, 5.0));
    }

    #[test]
    fn sparse_group_keeps_a_zero_median_and_a_tall_max() {
        let buzz = [0.0, 0.0, 0.0, 8.0];
        let records: Vec<_> =
            buzz.iter().map(|b| record(2, 14, *b)).collect();
        let stats = buzz_stats(&records, BuzzGrouping::HourOfDay).unwrap();
        let g = &stats.groups[0];
        assert_eq!(g.group, "14");
        assert_eq!((g.min, g.q1, g.median, g.q3, g.max), (0.0, 0.0, 0.0, 2.0, 8.0));
    }

    #[test]
    fn groups_without_records_are_omitted() {
        let records = vec![record(1, 9, 1.0), record(3, 16, 2.0)];
        let monthly = buzz_stats(&records, BuzzGrouping::CalendarMonth).unwrap();
        let keys: Vec<&str> = monthly.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(keys, vec!["2021-01", "2021-03"], "february never appears");
        let hourly = buzz_stats(&records, BuzzGrouping::HourOfDay).unwrap();
        let keys: Vec<&str> = hourly.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(keys, vec!["09", "16"]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(buzz_stats(&[], BuzzGrouping::HourOfDay).is_err());
    }

    proptest! {
        // The five numbers are order statistics, so they must be sorted.
        #[test]
        fn summaries_are_monotone(
            buzz in proptest::collection::vec(0.0f64..50.0, 1..80),
            hours in proptest::collection::vec(0u32..24, 1..80),
        ) {
            let records: Vec<_> = buzz
                .iter()
                .zip(&hours)
                .map(|(b, h)| record(6, *h, *b))
                .collect();
            let stats = buzz_stats(&records, BuzzGrouping::HourOfDay).unwrap();
            for g in &stats.groups {
                prop_assert!(g.min <= g.q1 && g.q1 <= g.median);
                prop_assert!(g.median <= g.q3 && g.q3 <= g.max);
            }
        }
    }
}

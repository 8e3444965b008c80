//! Prediction scores to per-interval positions.

use chrono::{DateTime, Utc};

use crate::data::csv_io::PredictionRow;
use crate::data::{LABEL_DOWN, LABEL_UP};
use crate::error::{Error, Result};

/// Maps one score row to a signal: the argmax class when its score reaches
/// `threshold`, otherwise flat. Ties pick the lowest class index, so an exact
/// down/up tie goes short rather than flipping on noise order.
fn signal(scores: &[f64; 3], threshold: f64) -> i8 {
    let mut best = 0usize;
    for c in 1..3 {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    if scores[best] < threshold {
        return 0;
    }
    match best {
        LABEL_DOWN => -1,
        LABEL_UP => 1,
        _ => 0,
    }
}

/// Turns a score stream into positions, one per row: +1, -1, or 0 by the
/// thresholded-argmax rule. A position holds exactly until the signal
/// changes; every transition out of a nonzero position closes a trade.
pub fn signals_to_positions(scores: &[[f64; 3]], threshold: f64) -> Vec<i8> {
    scores.iter().map(|s| signal(s, threshold)).collect()
}

/// Spreads day-level predictions over bar intervals. The position at a bar
/// is the signal of the latest prediction stamped at or before that bar's
/// timestamp, so nothing ever acts on a prediction from the future; bars
/// before the first prediction stay flat.
///
/// # Errors
/// Fails when either series is not strictly ordered or when a prediction
/// timestamp matches no bar (the two files describe different spans).
pub fn positions_for_bars(
    bar_timestamps: &[DateTime<Utc>],
    predictions: &[PredictionRow],
    threshold: f64,
) -> Result<Vec<i8>> {
    if bar_timestamps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data("bars must be strictly ordered by timestamp"));
    }
    if predictions.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
        return Err(Error::data("predictions must be strictly ordered by timestamp"));
    }
    for p in predictions {
        if bar_timestamps.binary_search(&p.timestamp).is_err() {
            return Err(Error::data(format!(
                "prediction at {} matches no bar; prediction and bar files disagree",
                p.timestamp
            )));
        }
    }
    let mut positions = Vec::with_capacity(bar_timestamps.len());
    let mut next = 0usize;
    let mut current = 0i8;
    for ts in bar_timestamps {
        while next < predictions.len() && predictions[next].timestamp <= *ts {
            current = signal(&predictions[next].scores, threshold);
            next += 1;
        }
        positions.push(current);
    }
    Ok(positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(minute: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 3, 1, 14, minute, 0).unwrap()
    }

    #[test]
    fn confident_up_goes_long() {
        assert_eq!(signals_to_positions(&[[0.1, 0.1, 0.8]], 0.5), vec![1]);
    }

    #[test]
    fn argmax_below_threshold_stays_flat() {
        assert_eq!(signals_to_positions(&[[0.4, 0.3, 0.3]], 0.5), vec![0]);
        assert_eq!(signals_to_positions(&[[0.4, 0.3, 0.3]], 0.34), vec![-1]);
    }

    #[test]
    fn flat_argmax_never_trades() {
        assert_eq!(signals_to_positions(&[[0.1, 0.8, 0.1]], 0.5), vec![0]);
    }

    #[test]
    fn exact_ties_break_toward_the_lowest_class() {
        assert_eq!(signals_to_positions(&[[0.45, 0.1, 0.45]], 0.4), vec![-1]);
    }

    #[test]
    fn positions_spread_forward_from_each_prediction() {
        let bars: Vec<_> = (0..6).map(ts).collect();
        let predictions = vec![
            PredictionRow { timestamp: ts(1), scores: [0.1, 0.1, 0.8], label: 2 },
            PredictionRow { timestamp: ts(4), scores: [0.8, 0.1, 0.1], label: 0 },
        ];
        let pos = positions_for_bars(&bars, &predictions, 0.5).unwrap();
        assert_eq!(pos, vec![0, 1, 1, 1, -1, -1]);
    }

    #[test]
    fn unmatched_prediction_timestamp_is_a_data_error() {
        let bars: Vec<_> = (0..3).map(ts).collect();
        let predictions =
            vec![PredictionRow { timestamp: ts(30), scores: [0.1, 0.1, 0.8], label: 2 }];
        let err = positions_for_bars(&bars, &predictions, 0.5).unwrap_err();
        assert!(err.to_string().contains("no bar"), "{err}");
    }

    #[test]
    fn unsorted_inputs_are_rejected() {
        let bars = vec![ts(2), ts(1)];
        assert!(positions_for_bars(&bars, &[], 0.5).is_err());
        let bars = vec![ts(1), ts(2)];
        let dup = PredictionRow { timestamp: ts(1), scores: [0.1, 0.1, 0.8], label: 2 };
        assert!(positions_for_bars(&bars, &[dup.clone(), dup], 0.5).is_err());
    }
}

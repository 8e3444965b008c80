//! Binding sentiment onto the bar grid and cutting aligned rows into days.
//!
//! Binding is a right join: bars drive the grid, sentiment records outside
//! every bar interval are dropped, and bars without sentiment get an explicit
//! zero-buzz record. Day frames z-score trading features within the day;
//! sentiment features stay on their natural scale (indices in [-1, 1], buzz
//! as log1p) so that intervals without sentiment carry exact zeros.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use tapegrad::Tensor;

use super::indicators::{compute_indicators, IndicatorRow, WARMUP};
use super::trmi::aggregate_onto_grid;
use super::{AlignedRow, AlignedSample, Bar, TrmiRecord, LABEL_DOWN, LABEL_FLAT, LABEL_UP};
use crate::error::{Error, Result};

/// Shape of a trading day and how labels are derived.
#[derive(Debug, Clone)]
pub struct FrameConfig {
    /// Bars per session; every emitted day has exactly this many intervals.
    pub intervals_per_day: usize,
    /// Session start as seconds after UTC midnight.
    pub session_start_secs: u32,
    /// Bar interval in seconds.
    pub interval_secs: i64,
    /// Label horizon in intervals after the day's last bar.
    pub horizon: usize,
    /// Flat-class half-width as a return fraction; moves with
    /// `|return| <= flat_band` are labeled flat.
    pub flat_band: f64,
    /// Appends the five indicator rows to the trading frame.
    pub use_indicators: bool,
    /// Days needing more than this fraction of forward-filled bars are dropped.
    pub max_fill_frac: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            intervals_per_day: 13,
            session_start_secs: 14 * 3600 + 1800,
            interval_secs: 1800,
            horizon: 1,
            flat_band: 0.0005,
            use_indicators: false,
            max_fill_frac: 0.2,
        }
    }
}

impl FrameConfig {
    /// Number of trading feature rows given the indicator flag.
    pub fn trading_features(&self) -> usize {
        if self.use_indicators {
            10
        } else {
            5
        }
    }

    /// # Errors
    /// Fails on zero-sized grid parameters or a negative flat band.
    pub fn validate(&self) -> Result<()> {
        if self.intervals_per_day == 0 {
            return Err(Error::config("intervals_per_day must be >= 1"));
        }
        if self.interval_secs <= 0 {
            return Err(Error::config("interval_secs must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1 interval"));
        }
        if self.flat_band < 0.0 {
            return Err(Error::config("flat_band must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.max_fill_frac) {
            return Err(Error::config("max_fill_frac must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Joins sentiment records onto bars (right join, zero padding).
///
/// Every bar appears exactly once in the output; records in intervals with no
/// bar are dropped.
///
/// # Errors
/// Fails on unsorted inputs, invalid bars, or invalid sentiment records.
pub fn bind_align(
    bars: &[Bar],
    records: &[TrmiRecord],
    interval_secs: i64,
) -> Result<Vec<AlignedRow>> {
    if bars.is_empty() {
        return Err(Error::data("bind_align needs at least one bar".to_string()));
    }
    if bars.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
        return Err(Error::data("bars must be strictly increasing in time".to_string()));
    }
    for bar in bars {
        bar.validate()?;
    }
    for rec in records {
        rec.validate()?;
    }
    let grid: Vec<DateTime<Utc>> = bars.iter().map(|b| b.timestamp).collect();
    let bound = aggregate_onto_grid(records, &grid, interval_secs)?;
    Ok(bars
        .iter()
        .zip(bound)
        .map(|(bar, sentiment)| AlignedRow { bar: bar.clone(), sentiment, filled: false })
        .collect())
}

/// Population z-score of a row in place; near-constant rows map to ~0.
fn zscore(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-12;
    for v in row {
        *v = (*v - mean) / sd;
    }
}

struct DayGroup {
    date: NaiveDate,
    rows: Vec<AlignedRow>,
    /// Per slot: the global index of the observed row, or for filled slots
    /// the index of the row the fill was taken from.
    globals: Vec<usize>,
    /// Global index of the day's last observed row in the aligned series.
    last_global: usize,
    first_global: usize,
}

/// Places a day's rows onto the session slot grid, forward-filling gaps.
fn snap_to_grid(
    date: NaiveDate,
    day_rows: &[(usize, AlignedRow)],
    cfg: &FrameConfig,
    prev: Option<(usize, f64)>,
) -> Result<Option<DayGroup>> {
    let base = date
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        + Duration::seconds(i64::from(cfg.session_start_secs));
    let mut slots: Vec<Option<(usize, AlignedRow)>> = vec![None; cfg.intervals_per_day];
    for (g, row) in day_rows {
        let offset = (row.bar.timestamp - base).num_seconds();
        if offset < 0 || offset % cfg.interval_secs != 0 {
            return Err(Error::data(format!(
                "bar at {} is off the session grid",
                row.bar.timestamp
            )));
        }
        let slot = (offset / cfg.interval_secs) as usize;
        if slot >= cfg.intervals_per_day {
            return Err(Error::data(format!(
                "bar at {} falls past the session's {} intervals",
                row.bar.timestamp, cfg.intervals_per_day
            )));
        }
        slots[slot] = Some((*g, row.clone()));
    }
    let missing = slots.iter().filter(|s| s.is_none()).count();
    let budget = (cfg.max_fill_frac * cfg.intervals_per_day as f64).floor() as usize;
    if missing > budget {
        return Ok(None);
    }
    let mut last_seen = prev;
    let mut rows = Vec::with_capacity(cfg.intervals_per_day);
    let mut globals = Vec::with_capacity(cfg.intervals_per_day);
    for (k, slot) in slots.into_iter().enumerate() {
        match slot {
            Some((g, row)) => {
                last_seen = Some((g, row.bar.close));
                globals.push(g);
                rows.push(row);
            }
            None => {
                let Some((g, c)) = last_seen else {
                    // Nothing to fill from at the very start of the series.
                    return Ok(None);
                };
                let ts = base + Duration::seconds(cfg.interval_secs * k as i64);
                globals.push(g);
                rows.push(AlignedRow {
                    bar: Bar { timestamp: ts, open: c, high: c, low: c, close: c, volume: 0.0 },
                    sentiment: TrmiRecord::missing(ts),
                    filled: true,
                });
            }
        }
    }
    let first_global = day_rows.first().map(|(g, _)| *g).unwrap_or(0);
    let last_global = day_rows.last().map(|(g, _)| *g).unwrap_or(0);
    Ok(Some(DayGroup { date, rows, globals, last_global, first_global }))
}

/// Cuts aligned rows into per-day samples with z-scored trading frames,
/// sentiment frames, presence masks and horizon labels.
///
/// Days are dropped when they overlap the indicator warm-up, need more
/// forward-fill than `max_fill_frac` allows, or have no bar left to define the
/// label horizon. Labels compare the close `horizon` intervals after the
/// day's last observed bar against that bar's close.
///
/// # Errors
/// Fails on invalid config, off-grid bars, insufficient indicator warm-up, or
/// fewer than two usable days.
pub fn build_day_frames(rows: &[AlignedRow], cfg: &FrameConfig) -> Result<Vec<AlignedSample>> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::data("no aligned rows".to_string()));
    }
    let indicator_rows: Option<Vec<IndicatorRow>> = if cfg.use_indicators {
        let bars: Vec<Bar> = rows.iter().map(|r| r.bar.clone()).collect();
        Some(compute_indicators(&bars)?)
    } else {
        None
    };
    let closes: Vec<f64> = rows.iter().map(|r| r.bar.close).collect();

    // Group by UTC date, keeping global row indices for labels and warm-up.
    let mut groups: Vec<(NaiveDate, Vec<(usize, AlignedRow)>)> = Vec::new();
    for (g, row) in rows.iter().enumerate() {
        let date = row.bar.timestamp.date_naive();
        match groups.last_mut() {
            Some((d, v)) if *d == date => v.push((g, row.clone())),
            _ => groups.push((date, vec![(g, row.clone())])),
        }
    }

    let mut samples = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for (date, day_rows) in groups {
        let last_seen = day_rows.last().map(|(g, r)| (*g, r.bar.close));
        let group = snap_to_grid(date, &day_rows, cfg, prev)?;
        prev = last_seen.or(prev);
        let Some(group) = group else { continue };
        if cfg.use_indicators && group.first_global < WARMUP {
            continue;
        }
        let horizon_idx = group.last_global + cfg.horizon;
        if horizon_idx >= closes.len() {
            continue;
        }
        let c0 = closes[group.last_global];
        let ret = closes[horizon_idx] / c0 - 1.0;
        let label = if ret > cfg.flat_band {
            LABEL_UP
        } else if ret < -cfg.flat_band {
            LABEL_DOWN
        } else {
            LABEL_FLAT
        };

        let t = cfg.intervals_per_day;
        let f = cfg.trading_features();
        let mut trading = vec![0.0; f * t];
        for (k, row) in group.rows.iter().enumerate() {
            trading[k] = row.bar.open;
            trading[t + k] = row.bar.high;
            trading[2 * t + k] = row.bar.low;
            trading[3 * t + k] = row.bar.close;
            trading[4 * t + k] = row.bar.volume;
        }
        if let Some(ind) = &indicator_rows {
            // Filled slots reuse the indicator row of the bar the fill came from.
            for (k, gi) in group.globals.iter().enumerate() {
                let vals = ind[*gi].as_array();
                for (j, v) in vals.iter().enumerate() {
                    trading[(5 + j) * t + k] = *v;
                }
            }
        }
        for r in 0..f {
            zscore(&mut trading[r * t..(r + 1) * t]);
        }

        let mut sentiment = vec![0.0; super::SENTIMENT_FEATURES * t];
        let mut mask = vec![0.0; t];
        for (k, row) in group.rows.iter().enumerate() {
            if row.sentiment.has_content() {
                mask[k] = 1.0;
                for (slot, v) in row.sentiment.values.iter().enumerate() {
                    sentiment[slot * t + k] = v.unwrap_or(0.0);
                }
                sentiment[4 * t + k] = row.sentiment.buzz.ln_1p();
            }
        }

        samples.push(AlignedSample {
            day: group.date,
            timestamps: group.rows.iter().map(|r| r.bar.timestamp).collect(),
            trading_frame: Tensor::from_vec(vec![f, t], trading).expect("sized above"),
            sentiment_frame: Tensor::from_vec(vec![super::SENTIMENT_FEATURES, t], sentiment)
                .expect("sized above"),
            sentiment_mask: mask,
            close_prices: group.rows.iter().map(|r| r.bar.close).collect(),
            label,
        });
    }
    if samples.len() < 2 {
        return Err(Error::data(format!(
            "pipeline produced {} usable days; at least 2 are required",
            samples.len()
        )));
    }
    Ok(samples)
}

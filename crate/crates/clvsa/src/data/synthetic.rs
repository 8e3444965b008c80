//! Synthetic market generator with a plantable directional signal.
//!
//! Prices follow a geometric random walk over a hidden chain of step signs.
//! `signal_channel` picks where that chain leaks: `price` makes consecutive
//! step signs persistent (past moves predict the next one), `sentiment` makes
//! records at interval k lean toward the sign of step k+1, `both` does both
//! and `none` neither. `signal_strength` scales the leak from coin-flip (0)
//! to near-deterministic (1).
//!
//! Three independent RNG substreams ("prices", "senti", "drops") keep bars
//! and the kept sentiment values bit-identical when only `sentiment_density`
//! changes, which makes sparsity sweeps comparable run to run.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::{Bar, TrmiRecord};
use crate::error::{Error, Result};
use crate::util::sub_seed;

/// Which observable stream carries the predictive signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalChannel {
    Price,
    Sentiment,
    Both,
    None,
}

impl SignalChannel {
    fn leaks_price(self) -> bool {
        matches!(self, Self::Price | Self::Both)
    }

    fn leaks_sentiment(self) -> bool {
        matches!(self, Self::Sentiment | Self::Both)
    }
}

impl std::str::FromStr for SignalChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "price" => Ok(Self::Price),
            "sentiment" => Ok(Self::Sentiment),
            "both" => Ok(Self::Both),
            "none" => Ok(Self::None),
            other => Err(Error::config(format!(
                "signal_channel must be price|sentiment|both|none, got {other}"
            ))),
        }
    }
}

/// Knobs for the generator.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Trading sessions to emit (weekdays only).
    pub days: usize,
    pub intervals_per_day: usize,
    pub interval_secs: i64,
    /// Session start as seconds after UTC midnight.
    pub session_start_secs: u32,
    /// First candidate calendar date; weekends are skipped.
    pub start_date: NaiveDate,
    pub start_price: f64,
    /// Per-interval log-return noise scale.
    pub vol: f64,
    pub signal_channel: SignalChannel,
    /// Signal strength in [0, 1]: 0 is pure noise, 1 near-deterministic.
    pub signal_strength: f64,
    /// Fraction of intervals that carry sentiment records.
    pub sentiment_density: f64,
    /// Records emitted per carrying interval; >1 exercises aggregation.
    pub records_per_interval: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 120,
            intervals_per_day: 13,
            interval_secs: 1800,
            session_start_secs: 14 * 3600 + 1800,
            start_date: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            start_price: 100.0,
            vol: 0.002,
            signal_channel: SignalChannel::Both,
            signal_strength: 0.6,
            sentiment_density: 1.0,
            records_per_interval: 2,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// # Errors
    /// Fails when sizes are zero or unit-interval knobs leave `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::config("days must be >= 1"));
        }
        if self.intervals_per_day == 0 || self.records_per_interval == 0 {
            return Err(Error::config("intervals_per_day and records_per_interval must be >= 1"));
        }
        if self.interval_secs <= 0 {
            return Err(Error::config("interval_secs must be positive"));
        }
        if !(self.start_price > 0.0) || !(self.vol > 0.0) {
            return Err(Error::config("start_price and vol must be positive"));
        }
        for (name, v) in [
            ("signal_strength", self.signal_strength),
            ("sentiment_density", self.sentiment_density),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Generated market plus the hidden chain that drove it.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub bars: Vec<Bar>,
    pub records: Vec<TrmiRecord>,
    /// Hidden step signs; `step_signs[k]` moved interval k, and the final
    /// extra entry is the phantom target the last interval's sentiment leans
    /// toward.
    pub step_signs: Vec<i8>,
}

fn session_dates(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(days);
    let mut d = start;
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Generates bars, sentiment records and the hidden sign chain.
///
/// # Errors
/// Fails only on invalid configuration.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut price_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "prices"));
    let mut senti_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "senti"));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "drops"));
    let step_noise: Normal<f64> = Normal::new(0.0, 1.0).expect("valid normal");
    let volume_dist = LogNormal::new(1000.0f64.ln(), 0.3).expect("valid lognormal");
    let buzz_dist = LogNormal::new(0.0, 0.35).expect("valid lognormal");

    let n = cfg.days * cfg.intervals_per_day;
    let p_keep = if cfg.signal_channel.leaks_price() {
        0.5 + 0.45 * cfg.signal_strength
    } else {
        0.5
    };
    // One extra sign so the last interval's sentiment still has a target.
    let mut step_signs: Vec<i8> = Vec::with_capacity(n + 1);
    let mut sign: i8 = if price_rng.gen_bool(0.5) { 1 } else { -1 };
    for _ in 0..=n {
        step_signs.push(sign);
        if !price_rng.gen_bool(p_keep) {
            sign = -sign;
        }
    }

    let senti_lean = if cfg.signal_channel.leaks_sentiment() { cfg.signal_strength } else { 0.0 };
    let dates = session_dates(cfg.start_date, cfg.days);
    let mut bars = Vec::with_capacity(n);
    let mut records = Vec::new();
    let mut log_price = cfg.start_price.ln();
    for (di, date) in dates.iter().enumerate() {
        let base = date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
            + Duration::seconds(i64::from(cfg.session_start_secs));
        for j in 0..cfg.intervals_per_day {
            let k = di * cfg.intervals_per_day + j;
            let ts = base + Duration::seconds(cfg.interval_secs * j as i64);

            let mag = cfg.vol * step_noise.sample(&mut price_rng).abs();
            let open = log_price.exp();
            log_price += f64::from(step_signs[k]) * mag;
            let close = log_price.exp();
            let hi_bump = 1.0 + 0.2 * cfg.vol * step_noise.sample(&mut price_rng).abs();
            let lo_bump = 1.0 - 0.2 * cfg.vol * step_noise.sample(&mut price_rng).abs();
            let volume = volume_dist.sample(&mut price_rng);
            bars.push(Bar {
                timestamp: ts,
                open,
                high: open.max(close) * hi_bump,
                low: open.min(close) * lo_bump.max(0.5),
                close,
                volume,
            });

            // Sentiment values are always drawn so the stream position does
            // not depend on density or channel; the keep decision comes from
            // its own stream.
            let target = f64::from(step_signs[k + 1]);
            let mut interval_records = Vec::with_capacity(cfg.records_per_interval);
            for _ in 0..cfg.records_per_interval {
                let offset = senti_rng.gen_range(0..cfg.interval_secs.max(1));
                let core = target * (0.75 + 0.15 * senti_rng.gen::<f64>());
                let mut mix = |scaled: f64| {
                    let noise = senti_rng.gen_range(-0.5..0.5);
                    clamp_unit(senti_lean * scaled + (1.0 - senti_lean) * noise)
                };
                let sentiment = mix(core);
                let optimism = mix(0.8 * core);
                let fear = mix(-0.6 * core);
                let joy = mix(0.5 * core);
                let buzz = buzz_dist.sample(&mut senti_rng);
                interval_records.push(TrmiRecord {
                    timestamp: ts + Duration::seconds(offset),
                    buzz,
                    values: [Some(sentiment), Some(optimism), Some(fear), Some(joy)],
                });
            }
            if drop_rng.gen::<f64>() < cfg.sentiment_density {
                interval_records.sort_by_key(|r| r.timestamp);
                records.extend(interval_records);
            }
        }
    }
    Ok(SynthData { bars, records, step_signs })
}

//! Report assembly: one struct holding every number the summary tables need,
//! plus the text and CSV renderers.

use std::io::Write;

use chrono::{DateTime, Datelike, NaiveDate, Utc};

use super::metrics::{annualized_return, jensen_alpha, sharpe, AlphaScale};
use super::positions::positions_for_bars;
use super::simulate::simulate;
use super::{BacktestConfig, BuzzStats, Trade, TRADING_DAYS_PER_YEAR};
use crate::data::csv_io::{format_timestamp, PredictionRow};
use crate::data::Bar;
use crate::error::{Error, Result};
use crate::train::metrics::mean_average_precision;

/// Everything a strategy evaluation reports. Ratio metrics are `None` when
/// their denominator degenerates (for example a flat strategy has no Sharpe
/// ratio); the renderers spell that out instead of printing a fake zero.
#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub map: f64,
    pub aar: f64,
    pub sharpe: Option<f64>,
    pub daily_jensen_alpha: Option<f64>,
    pub yearly_jensen_alpha: Option<f64>,
    pub cumulative_return: f64,
    pub equity: Vec<(DateTime<Utc>, f64)>,
    /// Calendar month key "YYYY-MM" with that month's compound return.
    pub monthly: Vec<(String, f64)>,
    pub trades: Vec<Trade>,
    pub winning_trades: usize,
    pub losing_trades: usize,
    pub trading_days: usize,
    pub config: BacktestConfig,
}

impl BacktestReport {
    /// Mean calendar-month return; 0 for an empty table.
    pub fn mean_monthly_return(&self) -> f64 {
        if self.monthly.is_empty() {
            return 0.0;
        }
        self.monthly.iter().map(|(_, r)| r).sum::<f64>() / self.monthly.len() as f64
    }

    pub fn months_positive(&self) -> usize {
        self.monthly.iter().filter(|(_, r)| *r > 0.0).count()
    }

    /// The five headline metrics on one line, in report-table order.
    pub fn metric_row(&self) -> String {
        format!(
            "MAP {:.4}  AAR {}  SR {}  DJA {}  YJA {}",
            self.map,
            percent(Some(self.aar)),
            plain(self.sharpe, 3),
            plain(self.daily_jensen_alpha, 6),
            percent(self.yearly_jensen_alpha),
        )
    }
}

fn percent(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}%", x * 100.0),
        None => "undefined".to_string(),
    }
}

fn plain(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{x:.digits$}"),
        None => "undefined".to_string(),
    }
}

/// Compound return per run of equal keys. Consecutive rows share a group
/// exactly when `key` agrees, so sorted timestamps give calendar groups and
/// the products telescope back to the cumulative return.
fn compound_by<K: PartialEq>(
    rows: &[(DateTime<Utc>, f64)],
    key: impl Fn(DateTime<Utc>) -> K,
) -> Vec<(K, f64)> {
    let mut out = Vec::new();
    let mut base = 1.0;
    let mut i = 0;
    while i < rows.len() {
        let k = key(rows[i].0);
        let mut j = i;
        while j + 1 < rows.len() && key(rows[j + 1].0) == k {
            j += 1;
        }
        let end = 1.0 + rows[j].1;
        out.push((k, end / base - 1.0));
        base = end;
        i = j + 1;
    }
    out
}

fn month_key(ts: DateTime<Utc>) -> String {
    format!("{:04}-{:02}", ts.year(), ts.month())
}

/// Metric errors become "undefined" entries; anything else still fails.
fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Metric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Folds a simulated curve, its trades, and the predictions that drove it
/// into the final report. `closes` must align with `equity` row for row; the
/// benchmark is a buy-and-hold of those closes.
///
/// # Errors
/// Fails on empty or misaligned inputs. Degenerate ratio denominators are
/// not errors here; they surface as `None` fields.
pub fn aggregate_report(
    equity: Vec<(DateTime<Utc>, f64)>,
    closes: &[f64],
    trades: Vec<Trade>,
    predictions: &[PredictionRow],
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    if equity.is_empty() {
        return Err(Error::data("cannot report on an empty span"));
    }
    if closes.len() != equity.len() {
        return Err(Error::data("equity and closes must align"));
    }
    if predictions.is_empty() {
        return Err(Error::data("no predictions fall inside the report span"));
    }
    let scored: Vec<([f64; 3], usize)> =
        predictions.iter().map(|p| (p.scores, usize::from(p.label))).collect();
    let map = mean_average_precision(&scored)?;

    let daily: Vec<(NaiveDate, f64)> = compound_by(&equity, |ts| ts.date_naive());
    let strategy_daily: Vec<f64> = daily.iter().map(|(_, r)| *r).collect();
    let bench_curve: Vec<(DateTime<Utc>, f64)> = equity
        .iter()
        .zip(closes)
        .map(|((ts, _), c)| (*ts, c / closes[0] - 1.0))
        .collect();
    let bench_daily: Vec<f64> =
        compound_by(&bench_curve, |ts| ts.date_naive()).into_iter().map(|(_, r)| r).collect();

    let trading_days = daily.len();
    let years = trading_days as f64 / TRADING_DAYS_PER_YEAR;
    let cumulative = equity.last().expect("non-empty").1;
    let rf_daily = cfg.risk_free_annual / TRADING_DAYS_PER_YEAR;

    let (winning, losing) = trades.iter().fold((0, 0), |(w, l), t| {
        if t.ret > 0.0 {
            (w + 1, l)
        } else {
            (w, l + 1)
        }
    });

    Ok(BacktestReport {
        map,
        aar: annualized_return(cumulative, years)?,
        sharpe: defined(sharpe(&strategy_daily, TRADING_DAYS_PER_YEAR, cfg.risk_free_annual))?,
        daily_jensen_alpha: defined(jensen_alpha(
            &strategy_daily,
            &bench_daily,
            rf_daily,
            AlphaScale::Daily,
        ))?,
        yearly_jensen_alpha: defined(jensen_alpha(
            &strategy_daily,
            &bench_daily,
            rf_daily,
            AlphaScale::Yearly,
        ))?,
        cumulative_return: cumulative,
        monthly: compound_by(&equity, month_key),
        equity,
        trades,
        winning_trades: winning,
        losing_trades: losing,
        trading_days,
        config: cfg.clone(),
    })
}

/// Runs the whole strategy evaluation: predictions spread into positions over
/// the bars, simulated, restricted to any configured sub-period, and
/// aggregated. Positions are computed over the full bar series first so a
/// sub-period window opens with whatever position the past signals imply.
///
/// # Errors
/// Fails when the series are unsorted or mismatched, when the restriction
/// leaves no bars, or when the span holds no predictions.
pub fn run_backtest(
    bars: &[Bar],
    predictions: &[PredictionRow],
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    cfg.validate()?;
    let timestamps: Vec<DateTime<Utc>> = bars.iter().map(|b| b.timestamp).collect();
    let positions = positions_for_bars(&timestamps, predictions, cfg.threshold)?;
    let inside = |d: NaiveDate| {
        cfg.from.is_none_or(|from| d >= from) && cfg.to.is_none_or(|to| d <= to)
    };
    let lo = timestamps.iter().position(|ts| inside(ts.date_naive()));
    let hi = timestamps.iter().rposition(|ts| inside(ts.date_naive()));
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(Error::config("the requested period lies outside the data span"));
    };
    let closes: Vec<f64> = bars[lo..=hi].iter().map(|b| b.close).collect();
    let (equity, trades) =
        simulate(&timestamps[lo..=hi], &positions[lo..=hi], &closes, cfg.cost_per_side)?;
    let rows: Vec<(DateTime<Utc>, f64)> =
        timestamps[lo..=hi].iter().copied().zip(equity).collect();
    let in_span: Vec<PredictionRow> = predictions
        .iter()
        .filter(|p| p.timestamp >= timestamps[lo] && p.timestamp <= timestamps[hi])
        .cloned()
        .collect();
    aggregate_report(rows, &closes, trades, &in_span, cfg)
}

/// Renders the report as a plain text document.
pub fn render_text(report: &BacktestReport) -> String {
    let mut s = String::new();
    let first = report.equity.first().expect("reports are never empty").0;
    let last = report.equity.last().expect("reports are never empty").0;
    s.push_str("strategy backtest\n");
    s.push_str("=================\n");
    s.push_str(&format!(
        "period: {} .. {} ({} trading days)\n",
        first.date_naive(),
        last.date_naive(),
        report.trading_days
    ));
    s.push_str(&format!(
        "assumptions: benchmark buy-and-hold, cost {:.4}% per side, risk-free {:.2}% annual, threshold {:.2}\n\n",
        report.config.cost_per_side * 100.0,
        report.config.risk_free_annual * 100.0,
        report.config.threshold
    ));
    s.push_str(&format!("  MAP  {:.4}\n", report.map));
    s.push_str(&format!("  AAR  {}\n", percent(Some(report.aar))));
    s.push_str(&format!("  SR   {}\n", plain(report.sharpe, 3)));
    s.push_str(&format!("  DJA  {}\n", plain(report.daily_jensen_alpha, 6)));
    s.push_str(&format!("  YJA  {}\n\n", percent(report.yearly_jensen_alpha)));
    s.push_str(&format!(
        "cumulative return: {}\n",
        percent(Some(report.cumulative_return))
    ));
    s.push_str(&format!(
        "trades: {} ({} winning / {} losing)\n",
        report.trades.len(),
        report.winning_trades,
        report.losing_trades
    ));
    s.push_str(&format!(
        "mean monthly return: {}; {} of {} months positive\n",
        percent(Some(report.mean_monthly_return())),
        report.months_positive(),
        report.monthly.len()
    ));
    s
}

/// # Errors
/// Propagates I/O failures.
pub fn write_equity_csv<W: Write>(w: W, equity: &[(DateTime<Utc>, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "cumret"])?;
    for (ts, e) in equity {
        out.write_record(&[format_timestamp(*ts), e.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Propagates I/O failures.
pub fn write_monthly_csv<W: Write>(w: W, monthly: &[(String, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["month", "ret"])?;
    for (month, r) in monthly {
        out.write_record(&[month.clone(), r.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Propagates I/O failures.
pub fn write_trades_csv<W: Write>(w: W, trades: &[Trade]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "entry_timestamp",
        "entry_price",
        "exit_timestamp",
        "exit_price",
        "direction",
        "return",
    ])?;
    for t in trades {
        out.write_record(&[
            format_timestamp(t.entry_timestamp),
            t.entry_price.to_string(),
            format_timestamp(t.exit_timestamp),
            t.exit_price.to_string(),
            t.direction.as_str().to_string(),
            t.ret.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one or more groupings into a single table; the `grouping` column
/// tells the blocks apart.
///
/// # Errors
/// Propagates I/O failures.
pub fn write_buzz_csv<W: Write>(w: W, stats: &[BuzzStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["grouping", "group", "min", "q1", "median", "q3", "max"])?;
    for block in stats {
        for g in &block.groups {
            out.write_record(&[
                block.grouping.as_str().to_string(),
                g.group.clone(),
                g.min.to_string(),
                g.q1.to_string(),
                g.median.to_string(),
                g.q3.to_string(),
                g.max.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

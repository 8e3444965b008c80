//! Summary statistics over return series.

use super::TRADING_DAYS_PER_YEAR;
use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n-1) standard deviation.
fn std_dev(xs: &[f64], m: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Annualized Sharpe ratio: mean excess return over its sample deviation,
/// scaled by the square root of periods per year. The risk-free rate is
/// annual and spread evenly across periods.
///
/// # Errors
/// Fails with fewer than two returns or zero variance; a constant series has
/// no defined ratio and is reported as such rather than silently zeroed.
pub fn sharpe(returns: &[f64], periods_per_year: f64, risk_free_annual: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::metric("sharpe ratio needs at least two returns"));
    }
    let rf = risk_free_annual / periods_per_year;
    let excess: Vec<f64> = returns.iter().map(|r| r - rf).collect();
    let m = mean(&excess);
    let s = std_dev(&excess, m);
    if s == 0.0 || !s.is_finite() {
        return Err(Error::metric("sharpe ratio undefined: excess returns have zero variance"));
    }
    Ok(m / s * periods_per_year.sqrt())
}

/// Horizon the regression alpha is quoted at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaScale {
    Daily,
    Yearly,
}

/// Least squares of excess strategy on excess benchmark returns:
/// `beta = cov(s, b) / var(b)`, `alpha = mean(s) - beta * mean(b)`.
fn ols(
    strategy: &[f64],
    benchmark: &[f64],
    risk_free_per_period: f64,
) -> Result<(f64, f64)> {
    if strategy.len() != benchmark.len() {
        return Err(Error::data(format!(
            "strategy ({}) and benchmark ({}) series must align",
            strategy.len(),
            benchmark.len()
        )));
    }
    if strategy.len() < 3 {
        return Err(Error::metric("jensen alpha needs at least three returns"));
    }
    let es: Vec<f64> = strategy.iter().map(|r| r - risk_free_per_period).collect();
    let eb: Vec<f64> = benchmark.iter().map(|r| r - risk_free_per_period).collect();
    let ms = mean(&es);
    let mb = mean(&eb);
    let mut cov = 0.0;
    let mut var = 0.0;
    for (s, b) in es.iter().zip(&eb) {
        cov += (s - ms) * (b - mb);
        var += (b - mb) * (b - mb);
    }
    if var == 0.0 || !var.is_finite() {
        return Err(Error::metric("jensen alpha undefined: benchmark has zero variance"));
    }
    let beta = cov / var;
    Ok((beta, ms - beta * mb))
}

/// Jensen alpha of daily strategy returns regressed on daily benchmark
/// returns. `Yearly` compounds the daily alpha over 252 days.
///
/// # Errors
/// Fails on mismatched lengths, fewer than three observations, or a
/// benchmark with zero variance.
pub fn jensen_alpha(
    strategy: &[f64],
    benchmark: &[f64],
    risk_free_per_period: f64,
    scale: AlphaScale,
) -> Result<f64> {
    let (_, alpha) = ols(strategy, benchmark, risk_free_per_period)?;
    Ok(match scale {
        AlphaScale::Daily => alpha,
        AlphaScale::Yearly => (1.0 + alpha).powf(TRADING_DAYS_PER_YEAR) - 1.0,
    })
}

/// Geometric annualization of a cumulative return held for `years`.
///
/// # Errors
/// Fails on a non-positive horizon or a cumulative loss at or past -100%.
pub fn annualized_return(cumulative: f64, years: f64) -> Result<f64> {
    if years <= 0.0 || !years.is_finite() {
        return Err(Error::metric(format!("cannot annualize over {years} years")));
    }
    if cumulative <= -1.0 {
        return Err(Error::metric("cannot annualize a total loss"));
    }
    Ok((1.0 + cumulative).powf(1.0 / years) - 1.0)
}

/// Estimated slope of `strategy` against `benchmark` (the beta half of
/// [`jensen_alpha`], exposed for tests and reports).
///
/// # Errors
/// Same contract as [`jensen_alpha`].
pub fn regression_beta(strategy: &[f64], benchmark: &[f64]) -> Result<f64> {
    ols(strategy, benchmark, 0.0).map(|(beta, _)| beta)
}

//! Rolling-origin evaluation over calendar months.
//!
//! Fold k trains on months [k·step, k·step + train) and tests on the
//! following `test` months, counted from the first sample's month. Windows
//! are quantized to whole days by construction (a sample is a day), so no
//! fold boundary ever splits one, and every test window lies strictly after
//! its train window.

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use tapegrad::Tape;

use super::fold::train_fold;
use super::metrics::{accuracy, mean_average_precision, softmax};
use super::TrainConfig;
use crate::data::AlignedSample;
use crate::error::{Error, Result};
use crate::exec::ordered_map;
use crate::model::forward::{Mode, Model};
use crate::model::params::ParamStore;
use crate::model::ModelConfig;
use crate::util::sub_seed;

/// One fold's outcome: the out-of-sample predictions and their quality.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Half-open month-aligned date ranges.
    pub train_window: (NaiveDate, NaiveDate),
    pub test_window: (NaiveDate, NaiveDate),
    /// Latest timestamp any training sample carries, for lookahead audits.
    pub last_train_timestamp: DateTime<Utc>,
    /// Per test sample: prediction timestamp, raw logits, true label.
    pub predictions: Vec<(DateTime<Utc>, [f64; 3], usize)>,
    /// Mean loss per training epoch.
    pub loss_curve: Vec<f64>,
    pub map: f64,
    pub accuracy: f64,
    /// Trained weights at the end of the fold, checkpoint-ready.
    pub params: ParamStore,
}

fn month_index(date: NaiveDate) -> i64 {
    i64::from(date.year()) * 12 + i64::from(date.month0())
}

fn month_start(index: i64) -> NaiveDate {
    let year = index.div_euclid(12);
    let month = index.rem_euclid(12) as u32 + 1;
    NaiveDate::from_ymd_opt(year as i32, month, 1).expect("month arithmetic stays in range")
}

/// Half-open month ranges `(train, test)` for each fold, as month indices.
fn fold_windows(first_month: i64, span: i64, cfg: &TrainConfig) -> Vec<((i64, i64), (i64, i64))> {
    let train = cfg.train_months as i64;
    let test = cfg.test_months as i64;
    let step = cfg.step_months as i64;
    let mut windows = Vec::new();
    let mut start = 0i64;
    while start + train + test <= span {
        let t0 = first_month + start;
        windows.push(((t0, t0 + train), (t0 + train, t0 + train + test)));
        start += step;
    }
    windows
}

/// Runs rolling train/test folds over a chronologically sorted day sequence.
///
/// Each fold gets its own seed stream; with `warm_start` the model instead
/// carries over from the previous fold and keeps training. Evaluation runs
/// the deterministic mean path.
///
/// # Errors
/// Fails when the dataset spans fewer months than one train+test window,
/// when samples are out of order, or when a window is too thin to train on.
pub fn walk_forward(
    samples: &[AlignedSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<Vec<FoldResult>> {
    model_cfg.validate()?;
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::data("walk-forward needs at least two days"));
    }
    if samples.windows(2).any(|w| w[0].day >= w[1].day) {
        return Err(Error::data("samples must be strictly ordered by day"));
    }
    let first_month = month_index(samples[0].day);
    let span = month_index(samples[samples.len() - 1].day) - first_month + 1;
    let windows = fold_windows(first_month, span, cfg);
    if windows.is_empty() {
        return Err(Error::config(format!(
            "dataset spans {span} months; walk-forward needs at least {}",
            cfg.train_months + cfg.test_months
        )));
    }
    let pairs = super::day_pairs(samples);
    let mut results = Vec::with_capacity(windows.len());
    let mut carried: Option<Model> = None;
    for (fold, (train_range, test_range)) in windows.into_iter().enumerate() {
        let in_range = |range: (i64, i64), cur: usize| {
            let m = month_index(samples[cur].day);
            range.0 <= m && m < range.1
        };
        let train_pairs: Vec<(usize, usize)> =
            pairs.iter().copied().filter(|&(_, cur)| in_range(train_range, cur)).collect();
        let test_pairs: Vec<(usize, usize)> =
            pairs.iter().copied().filter(|&(_, cur)| in_range(test_range, cur)).collect();
        if test_pairs.is_empty() {
            return Err(Error::data(format!("fold {fold} has an empty test window")));
        }
        let fold_seed = sub_seed(cfg.seed, &format!("fold{fold}"));
        let mut model = match carried.take() {
            Some(m) if cfg.warm_start => m,
            _ => Model::new(model_cfg.clone(), fold_seed)?,
        };
        let loss_curve = train_fold(&mut model, samples, &train_pairs, cfg, fold_seed, jobs)?;
        let predictions = ordered_map(&test_pairs, jobs, |&(prev, cur)| -> Result<_> {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &samples[prev], &samples[cur], Mode::Eval)?;
            let data = tape.value(out.logits).data();
            let logits = [data[0], data[1], data[2]];
            Ok((samples[cur].prediction_timestamp(), logits, samples[cur].label))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let scored: Vec<([f64; 3], usize)> = predictions
            .iter()
            .map(|(_, logits, y)| {
                let p = softmax(logits);
                ([p[0], p[1], p[2]], *y)
            })
            .collect();
        let last_train = samples[train_pairs.last().expect("train_fold checked size").1]
            .prediction_timestamp();
        results.push(FoldResult {
            fold,
            train_window: (month_start(train_range.0), month_start(train_range.1)),
            test_window: (month_start(test_range.0), month_start(test_range.1)),
            last_train_timestamp: last_train,
            map: mean_average_precision(&scored)?,
            accuracy: accuracy(&scored)?,
            predictions,
            loss_curve,
            params: model.params.clone(),
        });
        carried = Some(model);
    }
    Ok(results)
}

/// Flattens fold predictions in fold order, keeping the first prediction for
/// any timestamp so each one is covered at most once even when test windows
/// overlap (step smaller than test span).
pub fn concatenated_predictions(
    folds: &[FoldResult],
) -> Vec<(DateTime<Utc>, [f64; 3], usize)> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for fold in folds {
        for &(ts, logits, label) in &fold.predictions {
            if seen.insert(ts) {
                out.push((ts, logits, label));
            }
        }
    }
    out
}

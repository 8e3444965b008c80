//! CSV readers and writers for every file format the pipeline speaks.
//!
//! All timestamps are ISO-8601 UTC (`2021-01-04T14:30:00Z`). Floats are
//! written with Rust's shortest-round-trip formatting, so equal values always
//! produce equal bytes and re-reading restores the exact bits. Missing
//! sentiment indices are empty cells.

use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;

use super::{Bar, PsychVarRecord, TrmiPolarity, TrmiRecord, INDEX_NAMES};
use crate::error::{Error, Result};

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TS_FORMAT).to_string()
}

/// # Errors
/// Fails when the string is not an ISO-8601 datetime.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::data(format!("bad timestamp {s:?}: {e}")))
}

fn expect_header(got: &csv::StringRecord, want: &[&str], what: &str) -> Result<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| g != *w) {
        return Err(Error::data(format!(
            "{what} header mismatch: expected {:?}, got {:?}",
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_f64(field: &str, what: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::data(format!("row {row}: bad {what} value {field:?}")))
}

// ---- bars -----------------------------------------------------------------

pub const BARS_HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];

/// # Errors
/// Propagates I/O failures.
pub fn write_bars<W: Write>(w: W, bars: &[Bar]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BARS_HEADER)?;
    for b in bars {
        out.write_record(&[
            format_timestamp(b.timestamp),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Fails on a wrong header, malformed rows, or bars violating OHLC sanity.
pub fn read_bars<R: Read>(r: R) -> Result<Vec<Bar>> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(rdr.headers()?, &BARS_HEADER, "bars")?;
    let mut bars = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 6 {
            return Err(Error::data(format!("row {row}: expected 6 fields, got {}", rec.len())));
        }
        let bar = Bar {
            timestamp: parse_timestamp(&rec[0])?,
            open: parse_f64(&rec[1], "open", row)?,
            high: parse_f64(&rec[2], "high", row)?,
            low: parse_f64(&rec[3], "low", row)?,
            close: parse_f64(&rec[4], "close", row)?,
            volume: parse_f64(&rec[5], "volume", row)?,
        };
        bar.validate().map_err(|e| Error::data(format!("row {row}: {e}")))?;
        bars.push(bar);
    }
    Ok(bars)
}

// ---- trmi -----------------------------------------------------------------

pub const TRMI_HEADER: [&str; 6] = ["timestamp", "buzz", "sentiment", "optimism", "fear", "joy"];

/// # Errors
/// Propagates I/O failures.
pub fn write_trmi<W: Write>(w: W, records: &[TrmiRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRMI_HEADER)?;
    for r in records {
        let mut fields = vec![format_timestamp(r.timestamp), r.buzz.to_string()];
        for v in &r.values {
            fields.push(v.map(|x| x.to_string()).unwrap_or_default());
        }
        out.write_record(&fields)?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Fails on a wrong header, malformed rows, or out-of-range index values.
pub fn read_trmi<R: Read>(r: R) -> Result<Vec<TrmiRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(rdr.headers()?, &TRMI_HEADER, "trmi")?;
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 6 {
            return Err(Error::data(format!("row {row}: expected 6 fields, got {}", rec.len())));
        }
        let mut values = [None; 4];
        for (slot, v) in values.iter_mut().enumerate() {
            let field = rec[slot + 2].trim();
            if !field.is_empty() {
                *v = Some(parse_f64(field, INDEX_NAMES[slot], row)?);
            }
        }
        let out = TrmiRecord {
            timestamp: parse_timestamp(&rec[0])?,
            buzz: parse_f64(&rec[1], "buzz", row)?,
            values,
        };
        out.validate().map_err(|e| Error::data(format!("row {row}: {e}")))?;
        records.push(out);
    }
    Ok(records)
}

// ---- psychvars ------------------------------------------------------------

/// # Errors
/// Propagates I/O failures; rejects records whose variables disagree with the
/// first record's set.
pub fn write_psychvars<W: Write>(w: W, records: &[PsychVarRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let names: Vec<&String> = match records.first() {
        Some(r) => r.values.keys().collect(),
        None => {
            out.write_record(["timestamp"])?;
            out.flush()?;
            return Ok(());
        }
    };
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().map(|n| (*n).clone()));
    out.write_record(&header)?;
    for r in records {
        let mut fields = vec![format_timestamp(r.timestamp)];
        for name in &names {
            let v = r.values.get(*name).ok_or_else(|| {
                Error::data(format!("record at {} is missing variable {name}", r.timestamp))
            })?;
            fields.push(v.to_string());
        }
        out.write_record(&fields)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the wide psych-var format: `timestamp,<var names...>`.
///
/// # Errors
/// Fails when the first column is not `timestamp` or any cell is malformed.
pub fn read_psychvars<R: Read>(r: R) -> Result<Vec<PsychVarRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("timestamp") || header.len() < 2 {
        return Err(Error::data(
            "psychvar header must be timestamp,<var names...> with at least one variable"
                .to_string(),
        ));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::data(format!(
                "row {row}: expected {} fields, got {}",
                header.len(),
                rec.len()
            )));
        }
        let mut values = IndexMap::new();
        for (j, name) in names.iter().enumerate() {
            values.insert(name.clone(), parse_f64(&rec[j + 1], name, row)?);
        }
        records.push(PsychVarRecord { timestamp: parse_timestamp(&rec[0])?, values });
    }
    Ok(records)
}

// ---- polarity -------------------------------------------------------------

pub const POLARITY_HEADER: [&str; 3] = ["index", "psychvar", "polarity"];

/// # Errors
/// Propagates I/O failures.
pub fn write_polarity<W: Write>(w: W, table: &TrmiPolarity) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POLARITY_HEADER)?;
    for ((index, var), p) in table.iter() {
        out.write_record(&[index.clone(), var.clone(), p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Fails on a wrong header or polarities outside {+1, -1, 0}.
pub fn read_polarity<R: Read>(r: R) -> Result<TrmiPolarity> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(rdr.headers()?, &POLARITY_HEADER, "polarity")?;
    let mut table = TrmiPolarity::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let p: i8 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row}: bad polarity {:?}", &rec[2])))?;
        table
            .insert(&rec[0], &rec[1], p)
            .map_err(|e| Error::data(format!("row {row}: {e}")))?;
    }
    Ok(table)
}

// ---- predictions ----------------------------------------------------------

/// One out-of-sample prediction: class scores plus the realized label.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    /// Timestamp of the last bar the prediction was made from.
    pub timestamp: DateTime<Utc>,
    /// Class scores in label order down, flat, up.
    pub scores: [f64; 3],
    pub label: u8,
}

pub const PREDICTIONS_HEADER: [&str; 5] =
    ["timestamp", "score_down", "score_flat", "score_up", "label"];

/// # Errors
/// Propagates I/O failures.
pub fn write_predictions<W: Write>(w: W, rows: &[PredictionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PREDICTIONS_HEADER)?;
    for r in rows {
        out.write_record(&[
            format_timestamp(r.timestamp),
            r.scores[0].to_string(),
            r.scores[1].to_string(),
            r.scores[2].to_string(),
            r.label.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Fails on a wrong header, malformed rows, or labels outside 0..=2.
pub fn read_predictions<R: Read>(r: R) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(rdr.headers()?, &PREDICTIONS_HEADER, "predictions")?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let label: u8 = rec[4]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row}: bad label {:?}", &rec[4])))?;
        if label > 2 {
            return Err(Error::data(format!("row {row}: label {label} outside 0..=2")));
        }
        rows.push(PredictionRow {
            timestamp: parse_timestamp(&rec[0])?,
            scores: [
                parse_f64(&rec[1], "score_down", row)?,
                parse_f64(&rec[2], "score_flat", row)?,
                parse_f64(&rec[3], "score_up", row)?,
            ],
            label,
        });
    }
    Ok(rows)
}

// ---- training log ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub fold: usize,
    pub epoch: usize,
    pub loss: f64,
}

pub const TRAIN_LOG_HEADER: [&str; 3] = ["fold", "epoch", "loss"];

/// # Errors
/// Propagates I/O failures.
pub fn write_train_log<W: Write>(w: W, rows: &[TrainLogRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAIN_LOG_HEADER)?;
    for r in rows {
        out.write_record(&[r.fold.to_string(), r.epoch.to_string(), r.loss.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Fails on a wrong header or malformed rows.
pub fn read_train_log<R: Read>(r: R) -> Result<Vec<TrainLogRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(rdr.headers()?, &TRAIN_LOG_HEADER, "training log")?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let fold = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row}: bad fold {:?}", &rec[0])))?;
        let epoch = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row}: bad epoch {:?}", &rec[1])))?;
        rows.push(TrainLogRow { fold, epoch, loss: parse_f64(&rec[2], "loss", row)? });
    }
    Ok(rows)
}

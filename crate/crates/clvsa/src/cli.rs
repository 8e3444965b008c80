//! Command-line front end: five subcommands over one merged configuration.
//!
//! Configuration merges in three layers: built-in defaults, then the
//! `--config` file's flat `key=value` entries in file order, then flags.
//! Every knob has a default, so every subcommand runs bare. Grid keys
//! (`intervals_per_day`, `interval_secs`, `session_start_secs`) and the
//! `indicators` switch set the generator and the framer together so the two
//! can never drift apart, and `seed` fans out to every stage.
//!
//! Commands read inputs from explicit path flags or from `<out-dir>/<name>`
//! defaults, write their artifacts into `--out-dir`, and never modify an
//! input file. Exit codes: 0 on success, 2 on configuration or usage
//! mistakes, 1 on runtime failures, always with a single-line diagnostic on
//! stderr.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};

use crate::backtest::report::{
    write_buzz_csv, write_equity_csv, write_monthly_csv, write_trades_csv,
};
use crate::backtest::{buzz_stats, render_text, run_backtest, BacktestConfig, BuzzGrouping};
use crate::data::align::{bind_align, build_day_frames, FrameConfig};
use crate::data::csv_io::{
    read_bars, read_polarity, read_predictions, read_psychvars, read_trmi, write_bars,
    write_predictions, write_train_log, write_trmi, PredictionRow, TrainLogRow,
};
use crate::data::synthetic::{generate, SynthConfig};
use crate::data::trmi::{aggregate_onto_grid, compute_trmi_from_psychvars};
use crate::data::TrmiRecord;
use crate::error::{Error, Result};
use crate::experiments::{run_by_name, ExperimentConfig};
use crate::model::params::save_checkpoint;
use crate::model::ModelConfig;
use crate::train::metrics::{accuracy, mean_average_precision, softmax};
use crate::train::{concatenated_predictions, walk_forward, TrainConfig};

/// Every stage's configuration under one roof.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub frame: FrameConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub backtest: BacktestConfig,
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            frame: FrameConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            backtest: BacktestConfig::default(),
            experiment: ExperimentConfig::default(),
            out_dir: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl RunConfig {
    /// Applies one `key=value` entry; flags funnel through here too, so file
    /// and flag handling cannot diverge.
    ///
    /// # Errors
    /// Fails on an unknown key or an unparseable value.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => {
                let seed: u64 = parse_value(key, value)?;
                self.synth.seed = seed;
                self.train.seed = seed;
                self.experiment.seed = seed;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "jobs" => {
                self.jobs = parse_value(key, value)?;
                self.experiment.jobs = self.jobs;
            }
            "intervals_per_day" => {
                let v: usize = parse_value(key, value)?;
                self.synth.intervals_per_day = v;
                self.frame.intervals_per_day = v;
            }
            "interval_secs" => {
                let v: i64 = parse_value(key, value)?;
                self.synth.interval_secs = v;
                self.frame.interval_secs = v;
            }
            "session_start_secs" => {
                let v: u32 = parse_value(key, value)?;
                self.synth.session_start_secs = v;
                self.frame.session_start_secs = v;
            }
            "indicators" => {
                let v: bool = parse_value(key, value)?;
                self.model.use_indicators = v;
                self.frame.use_indicators = v;
            }
            "sentiment" => self.model.use_sentiment = parse_value(key, value)?,
            "synth.days" => self.synth.days = parse_value(key, value)?,
            "synth.start_date" => self.synth.start_date = parse_value(key, value)?,
            "synth.start_price" => self.synth.start_price = parse_value(key, value)?,
            "synth.vol" => self.synth.vol = parse_value(key, value)?,
            "synth.signal" => self.synth.signal_channel = parse_value(key, value)?,
            "synth.strength" => self.synth.signal_strength = parse_value(key, value)?,
            "synth.density" => self.synth.sentiment_density = parse_value(key, value)?,
            "synth.records_per_interval" => {
                self.synth.records_per_interval = parse_value(key, value)?;
            }
            "frame.horizon" => self.frame.horizon = parse_value(key, value)?,
            "frame.flat_band" => self.frame.flat_band = parse_value(key, value)?,
            "frame.max_fill_frac" => self.frame.max_fill_frac = parse_value(key, value)?,
            "model.variant" => self.model.variant = parse_value(key, value)?,
            "model.layers" => self.model.layers = parse_value(key, value)?,
            "model.hidden" => self.model.hidden = parse_value(key, value)?,
            "model.window" => self.model.window = parse_value(key, value)?,
            "model.conv_width" => self.model.conv_width = parse_value(key, value)?,
            "model.channels_per_group" => {
                self.model.channels_per_group = parse_value(key, value)?;
            }
            "model.latent" => self.model.latent = parse_value(key, value)?,
            "model.dense_hidden" => self.model.dense_hidden = parse_value(key, value)?,
            "model.classes" => self.model.classes = parse_value(key, value)?,
            "model.attention_heads" => self.model.attention_heads = parse_value(key, value)?,
            "model.sentiment_latent" => self.model.sentiment_latent = parse_value(key, value)?,
            "train.epochs" => self.train.epochs = parse_value(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "train.kld_weight" => self.train.kld_weight = parse_value(key, value)?,
            // "auto" restores the derived default of a tenth of total steps
            "train.warmup_steps" => {
                self.train.warmup_steps =
                    if value == "auto" { None } else { Some(parse_value(key, value)?) };
            }
            "train.train_months" => self.train.train_months = parse_value(key, value)?,
            "train.test_months" => self.train.test_months = parse_value(key, value)?,
            "train.step_months" => self.train.step_months = parse_value(key, value)?,
            "train.clip_norm" => self.train.clip_norm = parse_value(key, value)?,
            "train.warm_start" => self.train.warm_start = parse_value(key, value)?,
            "backtest.threshold" => self.backtest.threshold = parse_value(key, value)?,
            "backtest.cost_per_side" => self.backtest.cost_per_side = parse_value(key, value)?,
            "backtest.risk_free" => self.backtest.risk_free_annual = parse_value(key, value)?,
            "backtest.from" => self.backtest.from = Some(parse_value(key, value)?),
            "backtest.to" => self.backtest.to = Some(parse_value(key, value)?),
            "experiment.days" => self.experiment.days = parse_value(key, value)?,
            "experiment.intervals_per_day" => {
                self.experiment.intervals_per_day = parse_value(key, value)?;
            }
            "experiment.strength" => self.experiment.strength = parse_value(key, value)?,
            "experiment.epochs" => self.experiment.epochs = parse_value(key, value)?,
            "experiment.train_months" => self.experiment.train_months = parse_value(key, value)?,
            "experiment.test_months" => self.experiment.test_months = parse_value(key, value)?,
            "experiment.step_months" => self.experiment.step_months = parse_value(key, value)?,
            "experiment.replicates" => self.experiment.replicates = parse_value(key, value)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

/// Reads a flat `key=value` file; `#` starts a comment, blank lines skip.
///
/// # Errors
/// Fails on an unreadable file or a line without `=`.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "{}:{}: expected key=value, got {raw:?}",
                path.display(),
                i + 1
            )));
        };
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

#[derive(Parser, Debug)]
#[command(name = "clvsa", version, about = "Dual-channel sentiment fusion forecasting pipeline")]
pub struct Cli {
    /// Flat key=value configuration file applied before flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; drives generation, initialization, shuffling and noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; default input paths point here too.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for per-sample gradient and eval passes.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic bars and sentiment records.
    GenData(GenDataArgs),
    /// Fold raw psychological variables into interval sentiment records.
    Preprocess(PreprocessArgs),
    /// Walk-forward train a variant; writes checkpoints and predictions.
    Train(TrainArgs),
    /// Trade a prediction file against bars and report performance.
    Backtest(BacktestArgs),
    /// Run a canned comparison on planted synthetic data.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Trading sessions to generate.
    #[arg(long)]
    pub days: Option<usize>,
    /// Bars per session.
    #[arg(long)]
    pub intervals: Option<usize>,
    /// Fraction of intervals carrying sentiment records, in [0, 1].
    #[arg(long)]
    pub density: Option<f64>,
    /// Stream carrying the planted signal: price|sentiment|both|none.
    #[arg(long)]
    pub signal: Option<String>,
    /// Planted signal strength in [0, 1].
    #[arg(long)]
    pub strength: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw psychological-variable CSV; defaults to <out-dir>/psychvars.csv.
    #[arg(long)]
    pub psychvars: Option<PathBuf>,
    /// Polarity table CSV; defaults to <out-dir>/polarity.csv.
    #[arg(long)]
    pub polarity: Option<PathBuf>,
    /// Bar CSV defining the interval grid; defaults to <out-dir>/bars.csv.
    #[arg(long)]
    pub bars: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Model variant: lstm_s|clvsa|clvsa_input_fusion|dual_clvsa.
    #[arg(long)]
    pub variant: Option<String>,
    /// Feed the sentiment channel (dual and input-fusion variants need it).
    #[arg(long)]
    pub sentiment: bool,
    /// Append the technical-indicator rows to the trading frame.
    #[arg(long)]
    pub indicators: bool,
    /// Start each fold from the previous fold's weights.
    #[arg(long)]
    pub warm_start: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Bar CSV; defaults to <out-dir>/bars.csv.
    #[arg(long)]
    pub bars: Option<PathBuf>,
    /// Sentiment CSV; defaults to <out-dir>/trmi.csv.
    #[arg(long)]
    pub trmi: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BacktestArgs {
    /// Prediction CSV; defaults to <out-dir>/predictions.csv.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Bar CSV; defaults to <out-dir>/bars.csv.
    #[arg(long)]
    pub bars: Option<PathBuf>,
    /// Sentiment CSV; when given, buzz statistics are written too.
    #[arg(long)]
    pub trmi: Option<PathBuf>,
    /// Minimum argmax score before a direction is acted on.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Cost fraction charged per position side.
    #[arg(long)]
    pub cost: Option<f64>,
    /// Annual risk-free rate.
    #[arg(long)]
    pub risk_free: Option<f64>,
    /// Inclusive start date (YYYY-MM-DD) of the reporting window.
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Inclusive end date of the reporting window.
    #[arg(long)]
    pub to: Option<NaiveDate>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// One of fusion_benefit, input_fusion_harm, sparsity_sweep.
    pub name: String,
    /// Trading sessions to generate for the experiment.
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Planted signal strength in [0, 1].
    #[arg(long)]
    pub strength: Option<f64>,
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        for (key, value) in parse_config_file(path)? {
            cfg.apply(&key, &value)?;
        }
    }
    if let Some(seed) = cli.seed {
        cfg.apply("seed", &seed.to_string())?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.apply("jobs", &jobs.to_string())?;
    }
    match &cli.command {
        Command::GenData(a) => {
            apply_opt(&mut cfg, "synth.days", &a.days)?;
            apply_opt(&mut cfg, "intervals_per_day", &a.intervals)?;
            apply_opt(&mut cfg, "synth.density", &a.density)?;
            apply_opt(&mut cfg, "synth.signal", &a.signal)?;
            apply_opt(&mut cfg, "synth.strength", &a.strength)?;
            cmd_gen_data(&cfg)
        }
        Command::Preprocess(a) => cmd_preprocess(&cfg, a),
        Command::Train(a) => {
            apply_opt(&mut cfg, "model.variant", &a.variant)?;
            apply_opt(&mut cfg, "train.epochs", &a.epochs)?;
            if a.sentiment {
                cfg.apply("sentiment", "true")?;
            }
            if a.indicators {
                cfg.apply("indicators", "true")?;
            }
            if a.warm_start {
                cfg.apply("train.warm_start", "true")?;
            }
            cmd_train(&cfg, a)
        }
        Command::Backtest(a) => {
            apply_opt(&mut cfg, "backtest.threshold", &a.threshold)?;
            apply_opt(&mut cfg, "backtest.cost_per_side", &a.cost)?;
            apply_opt(&mut cfg, "backtest.risk_free", &a.risk_free)?;
            apply_opt(&mut cfg, "backtest.from", &a.from)?;
            apply_opt(&mut cfg, "backtest.to", &a.to)?;
            cmd_backtest(&cfg, a)
        }
        Command::Experiment(a) => {
            apply_opt(&mut cfg, "experiment.days", &a.days)?;
            apply_opt(&mut cfg, "experiment.epochs", &a.epochs)?;
            apply_opt(&mut cfg, "experiment.strength", &a.strength)?;
            cmd_experiment(&cfg, a)
        }
    }
}

fn apply_opt<T: ToString>(cfg: &mut RunConfig, key: &str, flag: &Option<T>) -> Result<()> {
    if let Some(v) = flag {
        cfg.apply(key, &v.to_string())?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))
}

/// Renders through the closure into memory, then writes the file in one shot.
fn write_file<F>(path: &Path, render: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf)?;
    fs::write(path, &buf)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", dir.display())))
}

fn default_path(dir: &Path, flag: &Option<PathBuf>, name: &str) -> PathBuf {
    flag.clone().unwrap_or_else(|| dir.join(name))
}

fn cmd_gen_data(cfg: &RunConfig) -> Result<()> {
    let data = generate(&cfg.synth)?;
    ensure_out_dir(&cfg.out_dir)?;
    let bars_path = cfg.out_dir.join("bars.csv");
    write_file(&bars_path, |w| write_bars(w, &data.bars))?;
    let trmi_path = cfg.out_dir.join("trmi.csv");
    write_file(&trmi_path, |w| write_trmi(w, &data.records))?;
    println!("wrote {} bars to {}", data.bars.len(), bars_path.display());
    println!("wrote {} sentiment records to {}", data.records.len(), trmi_path.display());
    println!("seed {}", cfg.synth.seed);
    Ok(())
}

fn cmd_preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> Result<()> {
    let psych = read_psychvars(open(&default_path(&cfg.out_dir, &a.psychvars, "psychvars.csv"))?)?;
    let polarity = read_polarity(open(&default_path(&cfg.out_dir, &a.polarity, "polarity.csv"))?)?;
    let bars = read_bars(open(&default_path(&cfg.out_dir, &a.bars, "bars.csv"))?)?;
    let raw: Vec<TrmiRecord> = psych
        .iter()
        .map(|r| compute_trmi_from_psychvars(r, &polarity))
        .collect::<Result<_>>()?;
    let grid: Vec<DateTime<Utc>> = bars.iter().map(|b| b.timestamp).collect();
    let bound = aggregate_onto_grid(&raw, &grid, cfg.frame.interval_secs)?;
    let kept: Vec<TrmiRecord> = bound.into_iter().filter(TrmiRecord::has_content).collect();
    ensure_out_dir(&cfg.out_dir)?;
    let out_path = cfg.out_dir.join("trmi.csv");
    write_file(&out_path, |w| write_trmi(w, &kept))?;
    println!(
        "folded {} raw records into {} interval records on a {}-bar grid",
        psych.len(),
        kept.len(),
        bars.len()
    );
    println!("wrote {}", out_path.display());
    Ok(())
}

fn prediction_row((ts, logits, label): &(DateTime<Utc>, [f64; 3], usize)) -> PredictionRow {
    let p = softmax(logits);
    PredictionRow { timestamp: *ts, scores: [p[0], p[1], p[2]], label: *label as u8 }
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    // catch variant/flag mismatches before any file is touched
    cfg.model.validate()?;
    cfg.train.validate()?;
    let bars = read_bars(open(&default_path(&cfg.out_dir, &a.bars, "bars.csv"))?)?;
    let records = read_trmi(open(&default_path(&cfg.out_dir, &a.trmi, "trmi.csv"))?)?;
    let rows = bind_align(&bars, &records, cfg.frame.interval_secs)?;
    let samples = build_day_frames(&rows, &cfg.frame)?;
    let folds = walk_forward(&samples, &cfg.model, &cfg.train, cfg.jobs)?;
    ensure_out_dir(&cfg.out_dir)?;
    let mut log_rows = Vec::new();
    for fold in &folds {
        let rows: Vec<PredictionRow> = fold.predictions.iter().map(prediction_row).collect();
        let pred_path = cfg.out_dir.join(format!("predictions_fold{}.csv", fold.fold));
        write_file(&pred_path, |w| write_predictions(w, &rows))?;
        let ckpt_path = cfg.out_dir.join(format!("checkpoint_fold{}.csv", fold.fold));
        write_file(&ckpt_path, |w| save_checkpoint(w, &fold.params))?;
        for (epoch, &loss) in fold.loss_curve.iter().enumerate() {
            log_rows.push(TrainLogRow { fold: fold.fold, epoch, loss });
        }
        println!(
            "fold {}: test {}..{} map {:.4} accuracy {:.4}",
            fold.fold, fold.test_window.0, fold.test_window.1, fold.map, fold.accuracy
        );
    }
    write_file(&cfg.out_dir.join("train_log.csv"), |w| write_train_log(w, &log_rows))?;
    let pooled: Vec<PredictionRow> =
        concatenated_predictions(&folds).iter().map(prediction_row).collect();
    write_file(&cfg.out_dir.join("predictions.csv"), |w| write_predictions(w, &pooled))?;
    let scored: Vec<([f64; 3], usize)> =
        pooled.iter().map(|r| (r.scores, usize::from(r.label))).collect();
    println!(
        "{}: map {:.4} accuracy {:.4} over {} folds ({} predictions)",
        cfg.model.variant,
        mean_average_precision(&scored)?,
        accuracy(&scored)?,
        folds.len(),
        pooled.len()
    );
    Ok(())
}

fn cmd_backtest(cfg: &RunConfig, a: &BacktestArgs) -> Result<()> {
    let bars = read_bars(open(&default_path(&cfg.out_dir, &a.bars, "bars.csv"))?)?;
    let predictions =
        read_predictions(open(&default_path(&cfg.out_dir, &a.predictions, "predictions.csv"))?)?;
    let report = run_backtest(&bars, &predictions, &cfg.backtest)?;
    ensure_out_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("equity.csv"), |w| write_equity_csv(w, &report.equity))?;
    write_file(&cfg.out_dir.join("monthly.csv"), |w| write_monthly_csv(w, &report.monthly))?;
    write_file(&cfg.out_dir.join("trades.csv"), |w| write_trades_csv(w, &report.trades))?;
    let report_path = cfg.out_dir.join("report.txt");
    fs::write(&report_path, render_text(&report))
        .map_err(|e| Error::data(format!("cannot write {}: {e}", report_path.display())))?;
    if let Some(trmi_path) = &a.trmi {
        let records = read_trmi(open(trmi_path)?)?;
        let stats = [
            buzz_stats(&records, BuzzGrouping::HourOfDay)?,
            buzz_stats(&records, BuzzGrouping::CalendarMonth)?,
        ];
        write_file(&cfg.out_dir.join("buzz_stats.csv"), |w| write_buzz_csv(w, &stats))?;
    }
    println!("{}", report.metric_row());
    Ok(())
}

fn cmd_experiment(cfg: &RunConfig, a: &ExperimentArgs) -> Result<()> {
    let report = run_by_name(&a.name, &cfg.experiment)?;
    ensure_out_dir(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join(format!("{}.csv", report.name));
    write_file(&csv_path, |w| report.write_csv(w))?;
    for row in &report.rows {
        println!(
            "{} density {:.2}: accuracy {:.4} map {:.4} ({} predictions over {} folds)",
            row.variant, row.density, row.accuracy, row.map, row.predictions, row.folds
        );
    }
    println!("{}", report.summary);
    println!("wrote {}", csv_path.display());
    Ok(())
}

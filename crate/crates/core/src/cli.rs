//! Command-line front end.
//!
//! Every command resolves one [`RunConfig`] (defaults, then the `--config`
//! TOML file, then flags), creates a fresh run directory under `out` and
//! writes the resolved config there as `config.toml` before doing any work.
//!
//! Run directory contents per command:
//!
//! | command      | files |
//! |--------------|-------|
//! | `indicators` | `indicators.csv` |
//! | `simulate`   | `ohlcv.csv`, `usd_index.csv`, `interbank_rate.csv` |
//! | `train`      | `models/year<k>.c1d`, `logs/year<k>.json`, `train_summary.json` |
//! | `evaluate`   | `report.csv`, `report.json`, `curves/*.csv` |
//! | `synthetic`  | `seed<s>/{result.json,loss_curves.csv,kernels.csv}`, `summary.json` |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_macro, load_ohlcv, simulate_market, split_years, write_macro, write_ohlcv, FeatureMatrix, MissingPolicy,
    SimulationConfig, TargetMode, YearCalendar, YearSplit,
};
use crate::error::{Error, Result};
use crate::evaluation::{build_report, export_curves, write_report_json, write_table_csv, EvaluationReport};
use crate::indicators::{compute_all, IndicatorConfig};
use crate::parallel::Execution;
use crate::persist::{load_bundle, save_bundle};
use crate::pipeline::{build_features, predict_year, train_all, PipelineConfig, YearOutcome};
use crate::synthetic::{run_comparison, write_kernels, write_loss_curves, ComparisonConfig, ComparisonResult, ComparisonSummary};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `date,open,high,low,close,volume`
    pub ohlcv: Option<PathBuf>,
    /// `date,value`
    pub macro_usd: Option<PathBuf>,
    /// `date,value`
    pub macro_rate: Option<PathBuf>,
    pub missing: MissingPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticRunConfig {
    /// consecutive seeds starting at the run seed
    pub seeds: usize,
    pub comparison: ComparisonConfig,
}

impl Default for SyntheticRunConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            comparison: ComparisonConfig::default(),
        }
    }
}

/// Everything a command needs; persisted verbatim into each run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// set from the command being run
    pub command: String,
    /// market identifier used in reports, e.g. `CSI300`
    pub market: String,
    pub seed: u64,
    pub out: PathBuf,
    /// run directory name; defaults to `<command>-<timestamp>`
    pub run_name: Option<String>,
    pub execution: Execution,
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
    pub synthetic: SyntheticRunConfig,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            market: "MARKET".into(),
            seed: 0,
            out: PathBuf::from("runs"),
            run_name: None,
            execution: Execution::default(),
            data: DataConfig::default(),
            pipeline: PipelineConfig::default(),
            synthetic: SyntheticRunConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Creates `<out>/<name>` (suffixing `-2`, `-3`, ... when taken) and writes `config.toml` into it.
pub fn create_run_dir(config: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let base = config.run_name.clone().unwrap_or_else(|| {
        format!("{}-{}", config.command, chrono::Local::now().format("%Y%m%d-%H%M%S"))
    });
    let mut dir = config.out.join(&base);
    let mut n = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = config.out.join(format!("{base}-{n}"));
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    write_file(&dir.join("config.toml"), config.to_toml()?.as_bytes())?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::Data(format!("json encoding: {e}")))?;
    text.push(b'\n');
    write_file(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("missing input file (set {flag} or the matching [data] key)")))
}

/// Writes every indicator of `config` for the bars in `ohlcv`, one row per bar,
/// with `NA` during each indicator's warm-up.
pub fn cmd_indicators(ohlcv: &Path, out: &Path, config: &IndicatorConfig, missing: MissingPolicy) -> Result<()> {
    let series = load_ohlcv(ohlcv, missing)?;
    let set = compute_all(&series, config)?;
    let mut w = csv::Writer::from_writer(create_file(out)?);
    let csv_err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
    let mut header = vec!["date".to_string()];
    header.extend(set.vectors.iter().map(|v| v.name.clone()));
    w.write_record(&header).map_err(csv_err)?;
    for (i, d) in series.dates.iter().enumerate() {
        let mut row = vec![d.to_string()];
        row.extend(set.vectors.iter().map(|v| {
            if v.is_valid(i) {
                v.values[i].to_string()
            } else {
                "NA".to_string()
            }
        }));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}

/// Writes a simulated market as the three input CSVs into `dir`.
pub fn cmd_simulate(config: &SimulationConfig, dir: &Path) -> Result<()> {
    let m = simulate_market(config)?;
    write_ohlcv(create_file(&dir.join("ohlcv.csv"))?, &m.prices)?;
    write_macro(create_file(&dir.join("usd_index.csv"))?, &m.usd_index)?;
    write_macro(create_file(&dir.join("interbank_rate.csv"))?, &m.interbank_rate)
}

/// Loads prices and both macro series and assembles the unnormalized features.
pub fn load_features(config: &RunConfig) -> Result<FeatureMatrix> {
    let prices = load_ohlcv(required(&config.data.ohlcv, "--data")?, config.data.missing)?;
    let usd = load_macro(required(&config.data.macro_usd, "--macro-usd")?, "usd_index")?;
    let rate = load_macro(required(&config.data.macro_rate, "--macro-rate")?, "interbank_rate")?;
    build_features(&prices, &[usd, rate], &config.pipeline.indicators)
}

/// Run details stored alongside each year's model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearModelInfo {
    pub market: String,
    pub year_index: usize,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub window: usize,
    pub channel_names: Vec<String>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedYear {
    pub year_index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub market: String,
    pub mode: TargetMode,
    pub trained: Vec<usize>,
    pub skipped: Vec<SkippedYear>,
}

pub fn model_path(run_dir: &Path, year_index: usize) -> PathBuf {
    run_dir.join("models").join(format!("year{year_index}.c1d"))
}

/// Trains one model per available calendar year and writes them under `dir`.
pub fn cmd_train(config: &RunConfig, dir: &Path) -> Result<TrainSummary> {
    let raw = load_features(config)?;
    let outcomes = train_all(&raw, &config.pipeline, config.seed, config.execution)?;
    let models = dir.join("models");
    let logs = dir.join("logs");
    for d in [&models, &logs] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let splits = split_years(&raw.dates, &config.pipeline.calendar);
    let mut summary = TrainSummary {
        market: config.market.clone(),
        mode: config.pipeline.mode,
        trained: Vec::new(),
        skipped: Vec::new(),
    };
    for (outcome, split) in outcomes.iter().zip(&splits) {
        match outcome {
            YearOutcome::Trained { bundle, record } => {
                let info = YearModelInfo {
                    market: config.market.clone(),
                    year_index: split.year_index,
                    test_start: split.test_start,
                    test_end: split.test_end,
                    window: config.pipeline.window,
                    channel_names: raw.channel_names.clone(),
                    seed: config.seed,
                };
                save_bundle(&model_path(dir, split.year_index), bundle, &info)?;
                write_json(&logs.join(format!("year{}.json", split.year_index)), record)?;
                summary.trained.push(split.year_index);
            }
            YearOutcome::Skipped { split, reason } => {
                log::warn!("year {} skipped: {reason}", split.year_index);
                summary.skipped.push(SkippedYear {
                    year_index: split.year_index,
                    reason: reason.clone(),
                });
            }
        }
    }
    write_json(&dir.join("train_summary.json"), &summary)?;
    if summary.trained.is_empty() {
        return Err(Error::InsufficientData("no calendar year could be trained".into()));
    }
    Ok(summary)
}

/// Scores the models of a `train` run directory against the configured data.
pub fn cmd_evaluate(config: &RunConfig, models_dir: &Path, dir: &Path) -> Result<EvaluationReport> {
    let summary: TrainSummary = read_json(&models_dir.join("train_summary.json"))?;
    let raw = load_features(config)?;
    let mut years = Vec::with_capacity(summary.trained.len());
    for &k in &summary.trained {
        let path = model_path(models_dir, k);
        if !path.exists() {
            return Err(Error::Data(format!("model for year {k} is missing ({})", path.display())));
        }
        let (bundle, info): (_, YearModelInfo) = load_bundle(&path)?;
        if info.channel_names != raw.channel_names {
            return Err(Error::Data(format!(
                "year {k} model was trained on channels {:?}, data provide {:?}",
                info.channel_names, raw.channel_names
            )));
        }
        let split = YearSplit {
            year_index: k,
            test_start: info.test_start,
            test_end: info.test_end,
            available: true,
        };
        years.push(predict_year(&bundle, &raw, &split, info.window, config.execution)?);
    }
    let report = build_report(&summary.market, summary.mode.model_name(), years)?;
    let reports = std::slice::from_ref(&report);
    write_table_csv(create_file(&dir.join("report.csv"))?, reports)?;
    let mut json = create_file(&dir.join("report.json"))?;
    write_report_json(&mut json, reports)?;
    json.write_all(b"\n").map_err(|e| Error::io(dir.join("report.json"), e))?;
    export_curves(&report, &dir.join("curves"))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub median: Option<ComparisonSummary>,
    pub failures: Vec<SeedFailure>,
}

/// Runs the sine-bias comparison for each seed; a diverging seed is reported and the rest continue.
pub fn cmd_synthetic(config: &RunConfig, dir: &Path) -> Result<(Vec<ComparisonResult>, SyntheticSummary)> {
    let cfg = &config.synthetic;
    if cfg.seeds == 0 {
        return Err(Error::Config("synthetic.seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let runs = config
        .execution
        .map(seeds.clone(), |s| run_comparison(&cfg.comparison, s, config.execution));
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in seeds.into_iter().zip(runs) {
        match run {
            Ok(r) => {
                let sub = dir.join(format!("seed{seed}"));
                fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                write_json(&sub.join("result.json"), &r)?;
                write_loss_curves(create_file(&sub.join("loss_curves.csv"))?, &r)?;
                write_kernels(create_file(&sub.join("kernels.csv"))?, &r)?;
                results.push(r);
            }
            Err(e @ (Error::Diverged { .. } | Error::Numeric(_))) => {
                log::warn!("seed {seed}: {e}");
                failures.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let summary = SyntheticSummary {
        median: (!results.is_empty()).then(|| ComparisonSummary::from_results(&results)),
        failures,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    if results.is_empty() {
        return Err(Error::Numeric("every seed diverged".into()));
    }
    Ok((results, summary))
}

#[derive(Debug, Parser)]
#[command(name = "c1d", version, about = "Indicator + convolutional autoencoder + LSTM stock forecasting")]
pub struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// parent directory of run directories
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// run directory name instead of `<command>-<timestamp>`
    #[arg(long, global = true)]
    pub run_name: Option<String>,
    /// OHLCV CSV
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// dollar-index CSV
    #[arg(long, global = true)]
    pub macro_usd: Option<PathBuf>,
    /// interbank-rate CSV
    #[arg(long, global = true)]
    pub macro_rate: Option<PathBuf>,
    /// absolute | roc
    #[arg(long, global = true)]
    pub mode: Option<TargetMode>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// `paper` or `YYYY-MM-DD:N`
    #[arg(long, global = true)]
    pub calendar: Option<String>,
    #[arg(long, global = true)]
    pub market: Option<String>,
    /// run everything on the calling thread
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the indicator channels of an OHLCV file
    Indicators,
    /// Write a simulated market (prices and both macro series)
    Simulate,
    /// Train one model per calendar year
    Train,
    /// Score the models of a train run
    Evaluate {
        /// run directory produced by `train`
        #[arg(long)]
        models: PathBuf,
    },
    /// Fused vs decoupled comparison on the sine-bias task
    Synthetic {
        /// number of consecutive seeds
        #[arg(long)]
        seeds: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Indicators => "indicators",
            Command::Simulate => "simulate",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Synthetic { .. } => "synthetic",
        }
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match (&self.config, &self.command) {
            (Some(p), _) => RunConfig::load(p)?,
            // evaluation reuses the training run's data and pipeline settings
            (None, Command::Evaluate { models }) if models.join("config.toml").exists() => {
                let mut c = RunConfig::load(&models.join("config.toml"))?;
                c.run_name = None;
                c
            }
            _ => RunConfig::default(),
        };
        c.command = self.command.name().to_string();
        if let Some(v) = self.seed {
            c.seed = v;
            c.simulation.seed = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.run_name {
            c.run_name = Some(v.clone());
        }
        if let Some(v) = &self.data {
            c.data.ohlcv = Some(v.clone());
        }
        if let Some(v) = &self.macro_usd {
            c.data.macro_usd = Some(v.clone());
        }
        if let Some(v) = &self.macro_rate {
            c.data.macro_rate = Some(v.clone());
        }
        if let Some(v) = self.mode {
            c.pipeline.mode = v;
        }
        if let Some(v) = self.window {
            c.pipeline.window = v;
        }
        if let Some(v) = &self.calendar {
            c.pipeline.calendar = YearCalendar::parse(v)?;
        }
        if let Some(v) = &self.market {
            c.market = v.clone();
        }
        if self.sequential {
            c.execution = Execution::Sequential;
        }
        if let Command::Synthetic { seeds: Some(n) } = self.command {
            c.synthetic.seeds = n;
        }
        Ok(c)
    }
}

/// Resolves the configuration, creates the run directory and runs the command; returns the directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let config = cli.resolve()?;
    let dir = create_run_dir(&config)?;
    log::info!("run directory {}", dir.display());
    match &cli.command {
        Command::Indicators => cmd_indicators(
            required(&config.data.ohlcv, "--data")?,
            &dir.join("indicators.csv"),
            &config.pipeline.indicators,
            config.data.missing,
        )?,
        Command::Simulate => cmd_simulate(&config.simulation, &dir)?,
        Command::Train => {
            let s = cmd_train(&config, &dir)?;
            log::info!("trained years {:?}, skipped {}", s.trained, s.skipped.len());
        }
        Command::Evaluate { models } => {
            let r = cmd_evaluate(&config, models, &dir)?;
            log::info!(
                "{} {}: average MAPE {:.6}, Theil U {:.6}",
                r.market,
                r.model,
                r.average.mape,
                r.average.theil_u
            );
        }
        Command::Synthetic { .. } => {
            let (_, s) = cmd_synthetic(&config, &dir)?;
            if let Some(m) = s.median {
                log::info!(
                    "median min test loss: fused {:.6}, decoupled {:.6}",
                    m.median_min_test_fused,
                    m.median_min_test_decoupled
                );
            }
        }
    }
    Ok(dir)
}

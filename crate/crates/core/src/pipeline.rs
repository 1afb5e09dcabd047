//! Per-year training and evaluation on stock data.
//!
//! For each walk-forward year the feature matrix is normalized with statistics
//! of the rows before the test interval, windowed, and split into train /
//! validation / test samples. The autoencoder is fit on the training windows,
//! the LSTM on their (frozen) encodings, and the resulting bundle predicts every
//! close inside the test interval.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AutoencoderConfig};
use crate::dataset::{
    align_macro, assemble_features, make_windows, normalize, normalize_with, partition, split_years, FeatureMatrix,
    MacroSeries, Partition, TargetMode, WindowedDataset, YearCalendar, YearSplit, CLOSE_CHANNEL,
};
use crate::error::{Error, Result};
use crate::evaluation::{CurvePoint, YearPredictions};
use crate::forecaster::{
    target_statistics, train_forecaster, ForecastModelBundle, Forecaster, ForecasterConfig, TrainableEncoder,
    TrainingLog,
};
use crate::indicators::{compute_all, IndicatorConfig, OhlcvSeries};
use crate::parallel::Execution;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// trading days per input window
    pub window: usize,
    pub mode: TargetMode,
    /// chronological tail of each training range used for early stopping
    pub validation_fraction: f64,
    pub calendar: YearCalendar,
    pub indicators: IndicatorConfig,
    /// `input_channels` and `input_len` are overwritten from the data and `window`
    pub autoencoder: AutoencoderConfig,
    pub forecaster: ForecasterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: 20,
            mode: TargetMode::Absolute,
            validation_fraction: 0.1,
            calendar: YearCalendar::paper(),
            indicators: IndicatorConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            forecaster: ForecasterConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Parameter("window length must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Parameter("validation fraction must lie in [0, 1)".into()));
        }
        self.indicators.validate()?;
        self.forecaster.validate()
    }

    /// Autoencoder settings for `channels` feature rows and one year's seed.
    pub fn autoencoder_for(&self, channels: usize, seed: u64) -> AutoencoderConfig {
        AutoencoderConfig {
            input_channels: channels,
            input_len: self.window,
            seed,
            ..self.autoencoder.clone()
        }
    }
}

/// Unnormalized feature matrix: prices, configured indicators, then macro series.
pub fn build_features(prices: &OhlcvSeries, macros: &[MacroSeries], indicators: &IndicatorConfig) -> Result<FeatureMatrix> {
    let set = compute_all(prices, indicators)?;
    let aligned = align_macro(prices, macros)?;
    assemble_features(prices, &set, &aligned)
}

/// Distinct, reproducible seeds for one year's autoencoder and forecaster.
pub fn year_seeds(seed: u64, year_index: usize) -> (u64, u64) {
    let base = seed.wrapping_mul(1000).wrapping_add(10 * year_index as u64);
    (base.wrapping_add(1), base.wrapping_add(2))
}

/// One year's normalized samples.
#[derive(Clone, Debug)]
pub struct YearData {
    pub split: YearSplit,
    /// columns before this index feed the normalization statistics
    pub train_end: usize,
    pub matrix: FeatureMatrix,
    pub dataset: WindowedDataset,
    pub partition: Partition,
}

pub fn prepare_year(raw: &FeatureMatrix, split: &YearSplit, config: &PipelineConfig) -> Result<YearData> {
    if !split.available {
        return Err(Error::InsufficientData(format!(
            "data do not cover year {} ({} to {})",
            split.year_index, split.test_start, split.test_end
        )));
    }
    let train_end = raw.index_of_date(split.test_start);
    let matrix = normalize(raw, 0..train_end)?;
    let dataset = make_windows(&matrix, config.window, config.mode, CLOSE_CHANNEL)?;
    let partition = partition(&dataset, split, config.validation_fraction)?;
    if partition.train.is_empty() {
        return Err(Error::InsufficientData(format!(
            "year {} has no training windows before {}",
            split.year_index, split.test_start
        )));
    }
    if partition.test.is_empty() {
        return Err(Error::InsufficientData(format!("year {} has no test windows", split.year_index)));
    }
    Ok(YearData {
        split: split.clone(),
        train_end,
        matrix,
        dataset,
        partition,
    })
}

/// A look-ahead violation found by [`audit_year`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookAhead {
    pub sample: usize,
    pub target_date: NaiveDate,
    pub last_input_date: NaiveDate,
}

/// Training and validation samples whose target or input reaches the test interval.
pub fn audit_year(data: &YearData) -> Vec<LookAhead> {
    let start = data.split.test_start;
    let w = data.dataset.window;
    data.partition
        .train
        .iter()
        .chain(&data.partition.validation)
        .filter_map(|&i| {
            let s = &data.dataset.samples[i];
            let last_input_date = data.matrix.dates[s.target_index - 1];
            let first_input = s.target_index - w;
            let bad = s.target_date >= start || last_input_date >= start || s.target_index >= data.train_end || first_input >= data.train_end;
            bad.then_some(LookAhead {
                sample: i,
                target_date: s.target_date,
                last_input_date,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearTraining {
    pub year_index: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub autoencoder_loss: Vec<f64>,
    pub forecaster: TrainingLog,
}

/// Trains one year's autoencoder and forecaster.
pub fn train_year(
    data: &YearData,
    config: &PipelineConfig,
    seed: u64,
    execution: Execution,
) -> Result<(ForecastModelBundle, YearTraining)> {
    let (ae_seed, fc_seed) = year_seeds(seed, data.split.year_index);
    let samples = &data.dataset.samples;
    let windows: Vec<&Tensor> = data.partition.train.iter().map(|&i| &samples[i].input).collect();
    let ae_cfg = config.autoencoder_for(data.matrix.n_channels(), ae_seed);
    let mut ae = autoencoder::train(&windows, &ae_cfg)?;

    let targets: Vec<f64> = data.partition.train.iter().map(|&i| samples[i].target).collect();
    let target_stats = target_statistics(&targets);
    let standardized = |i: usize| (samples[i].target - target_stats.center) / target_stats.scale;

    let fc_cfg = ForecasterConfig {
        seed: fc_seed,
        ..config.forecaster.clone()
    };
    let [d, _] = ae_cfg.latent_shape();
    let mut forecaster = Forecaster::init(d, fc_cfg.hidden, fc_seed);
    let log = if fc_cfg.joint_fine_tune {
        let arch = ae.architecture().clone();
        let n_enc = arch.encoder_param_count();
        let mut enc: Vec<Tensor> = ae.params[..n_enc].to_vec();
        let train: Vec<(&Tensor, f64)> = data.partition.train.iter().map(|&i| (&samples[i].input, standardized(i))).collect();
        let val: Vec<(&Tensor, f64)> = data
            .partition
            .validation
            .iter()
            .map(|&i| (&samples[i].input, standardized(i)))
            .collect();
        let log = train_forecaster(
            &mut forecaster,
            Some(TrainableEncoder {
                arch: &arch,
                params: &mut enc,
            }),
            &train,
            &val,
            &fc_cfg,
            execution,
        )?;
        ae.params.splice(..n_enc, enc);
        log
    } else {
        let encode = |idx: &[usize]| -> Result<Vec<Tensor>> {
            execution
                .map(idx.to_vec(), |i| ae.encode(&samples[i].input))
                .into_iter()
                .collect()
        };
        let train_latent = encode(&data.partition.train)?;
        let val_latent = encode(&data.partition.validation)?;
        let train: Vec<(&Tensor, f64)> = train_latent.iter().zip(&data.partition.train).map(|(l, &i)| (l, standardized(i))).collect();
        let val: Vec<(&Tensor, f64)> = val_latent
            .iter()
            .zip(&data.partition.validation)
            .map(|(l, &i)| (l, standardized(i)))
            .collect();
        train_forecaster(&mut forecaster, None, &train, &val, &fc_cfg, execution)?
    };

    let record = YearTraining {
        year_index: data.split.year_index,
        train_samples: data.partition.train.len(),
        validation_samples: data.partition.validation.len(),
        test_samples: data.partition.test.len(),
        autoencoder_loss: ae.loss_history.clone(),
        forecaster: log,
    };
    let bundle = ForecastModelBundle {
        autoencoder: ae,
        forecaster,
        mode: config.mode,
        normalization: data.matrix.normalization.clone().expect("normalized matrix"),
        target_stats,
        clip_threshold: fc_cfg.clip_threshold,
    };
    Ok((bundle, record))
}

/// Price forecasts for every target date inside `split`'s test interval.
pub fn predict_year(
    bundle: &ForecastModelBundle,
    raw: &FeatureMatrix,
    split: &YearSplit,
    window: usize,
    execution: Execution,
) -> Result<YearPredictions> {
    bundle.validate()?;
    if raw.n_channels() != bundle.normalization.len() {
        return Err(Error::dim(format!(
            "data have {} channels, the model expects {}",
            raw.n_channels(),
            bundle.normalization.len()
        )));
    }
    let matrix = normalize_with(raw, &bundle.normalization);
    let dataset = make_windows(&matrix, window, bundle.mode, CLOSE_CHANNEL)?;
    let test: Vec<usize> = dataset
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.target_date >= split.test_start && s.target_date <= split.test_end)
        .map(|(i, _)| i)
        .collect();
    if test.is_empty() {
        return Err(Error::InsufficientData(format!("year {} has no test windows", split.year_index)));
    }
    let points = execution
        .map(test, |i| -> Result<CurvePoint> {
            let s = &dataset.samples[i];
            Ok(CurvePoint {
                date: s.target_date,
                actual: s.actual_close,
                predicted: bundle.predict_price(s)?,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(YearPredictions {
        year_index: split.year_index,
        points,
    })
}

/// Outcome of one calendar year in a multi-year run.
#[derive(Clone, Debug)]
pub enum YearOutcome {
    Trained {
        bundle: Box<ForecastModelBundle>,
        record: YearTraining,
    },
    Skipped {
        split: YearSplit,
        reason: String,
    },
}

/// Trains every calendar year; years without enough data are skipped, other errors abort.
pub fn train_all(raw: &FeatureMatrix, config: &PipelineConfig, seed: u64, execution: Execution) -> Result<Vec<YearOutcome>> {
    config.validate()?;
    let splits = split_years(&raw.dates, &config.calendar);
    let results = execution.map(splits, |split| -> Result<YearOutcome> {
        let data = match prepare_year(raw, &split, config) {
            Ok(d) => d,
            Err(Error::InsufficientData(reason)) => return Ok(YearOutcome::Skipped { split, reason }),
            Err(e) => return Err(e),
        };
        let leaks = audit_year(&data);
        if !leaks.is_empty() {
            return Err(Error::Contract(format!(
                "year {}: {} training samples reach the test interval",
                split.year_index,
                leaks.len()
            )));
        }
        match train_year(&data, config, seed, execution) {
            Ok((bundle, record)) => Ok(YearOutcome::Trained {
                bundle: Box::new(bundle),
                record,
            }),
            Err(Error::InsufficientData(reason)) => Ok(YearOutcome::Skipped { split, reason }),
            Err(e) => Err(e),
        }
    });
    results.into_iter().collect()
}

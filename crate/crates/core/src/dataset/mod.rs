//! Feature assembly, normalization, windowing and walk-forward splits.

mod io;
mod simulate;
mod splits;

use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{IndicatorSet, OhlcvSeries};
use crate::tensor::Tensor;

pub use io::{
    load_macro, load_ohlcv, parse_macro, parse_ohlcv, write_macro, write_ohlcv, MacroSeries, MissingPolicy,
    MACRO_HEADER, OHLCV_HEADER,
};
pub use simulate::{simulate_market, SimulatedMarket, SimulationConfig};
pub use splits::{partition, split_years, Partition, YearCalendar, YearSplit};

pub const PRICE_CHANNELS: [&str; 5] = ["open", "high", "low", "close", "volume"];
/// Row of the close price in an assembled feature matrix.
pub const CLOSE_CHANNEL: usize = 3;
/// Normalized values are clipped to this many standard deviations.
pub const CLIP_SIGMA: f64 = 5.0;

/// Macro values carried onto trading dates.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedMacro {
    pub names: Vec<String>,
    /// leading trading dates without any macro observation yet
    pub dropped: usize,
    /// one row per macro series, covering trading dates `dropped..`
    pub values: Vec<Vec<f64>>,
}

/// Forward-fills each macro series onto the trading dates of `series`.
pub fn align_macro(series: &OhlcvSeries, macros: &[MacroSeries]) -> Result<AlignedMacro> {
    let mut dropped = 0;
    let mut filled = Vec::with_capacity(macros.len());
    for m in macros {
        if m.dates.is_empty() {
            return Err(Error::Data(format!("macro series {} is empty", m.name)));
        }
        let mut row = Vec::with_capacity(series.len());
        let mut j = 0;
        let mut last: Option<f64> = None;
        for d in &series.dates {
            while j < m.dates.len() && m.dates[j] <= *d {
                last = Some(m.values[j]);
                j += 1;
            }
            row.push(last);
        }
        dropped = dropped.max(row.iter().take_while(|v| v.is_none()).count());
        filled.push(row);
    }
    if dropped >= series.len() {
        return Err(Error::Data("macro series start after the last trading date".into()));
    }
    let values = filled
        .into_iter()
        .map(|row| row[dropped..].iter().map(|v| v.expect("filled after first observation")).collect())
        .collect();
    Ok(AlignedMacro {
        names: macros.iter().map(|m| m.name.clone()).collect(),
        dropped,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub center: f64,
    pub scale: f64,
    /// the training range had zero spread, so `scale` fell back to 1
    pub degenerate: bool,
}

impl ChannelStats {
    pub fn apply(&self, x: f64) -> f64 {
        ((x - self.center) / self.scale).clamp(-CLIP_SIGMA, CLIP_SIGMA)
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

/// Channel-by-time feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub channel_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `channels[c][t]`
    pub channels: Vec<Vec<f64>>,
    /// unnormalized closes, kept for rate-of-change targets and price reconstruction
    pub raw_close: Vec<f64>,
    pub normalization: Option<Vec<ChannelStats>>,
}

impl FeatureMatrix {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Index of the first date on or after `date`.
    pub fn index_of_date(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|d| *d < date)
    }

    pub fn window(&self, start: usize, w: usize) -> Tensor {
        let mut data = Vec::with_capacity(self.n_channels() * w);
        for row in &self.channels {
            data.extend_from_slice(&row[start..start + w]);
        }
        Tensor::from_parts(vec![self.n_channels(), w], data)
    }
}

/// Stacks prices, indicators and macro series into one matrix over their common valid range.
pub fn assemble_features(
    series: &OhlcvSeries,
    indicators: &IndicatorSet,
    macros: &AlignedMacro,
) -> Result<FeatureMatrix> {
    let start = indicators.warmup.max(macros.dropped);
    if start >= series.len() {
        return Err(Error::InsufficientData(format!(
            "no bars left after dropping {start} warm-up/alignment rows from {}",
            series.len()
        )));
    }
    let mut names: Vec<String> = PRICE_CHANNELS.iter().map(|s| s.to_string()).collect();
    let mut channels: Vec<Vec<f64>> = [&series.open, &series.high, &series.low, &series.close, &series.volume]
        .iter()
        .map(|c| c[start..].to_vec())
        .collect();
    for v in &indicators.vectors {
        if v.values.len() != series.len() {
            return Err(Error::dim(format!("indicator {} is not aligned with the series", v.name)));
        }
        names.push(v.name.clone());
        channels.push(v.values[start..].to_vec());
    }
    for (name, row) in macros.names.iter().zip(&macros.values) {
        names.push(name.clone());
        channels.push(row[start - macros.dropped..].to_vec());
    }
    for (name, row) in names.iter().zip(&channels) {
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "channel {name} has a non-finite value on {}",
                series.dates[start + i]
            )));
        }
    }
    Ok(FeatureMatrix {
        channel_names: names,
        dates: series.dates[start..].to_vec(),
        channels,
        raw_close: series.close[start..].to_vec(),
        normalization: None,
    })
}

/// Per-channel z-scores with statistics from `train_range` only, clipped to ±5σ.
pub fn normalize(matrix: &FeatureMatrix, train_range: Range<usize>) -> Result<FeatureMatrix> {
    if train_range.is_empty() || train_range.end > matrix.len() {
        return Err(Error::Parameter(format!(
            "training range {train_range:?} is empty or exceeds {} columns",
            matrix.len()
        )));
    }
    let stats: Vec<ChannelStats> = matrix
        .channels
        .iter()
        .map(|row| channel_stats(&row[train_range.clone()]))
        .collect();
    Ok(normalize_with(matrix, &stats))
}

/// Applies previously computed statistics.
pub fn normalize_with(matrix: &FeatureMatrix, stats: &[ChannelStats]) -> FeatureMatrix {
    let channels = matrix
        .channels
        .iter()
        .zip(stats)
        .map(|(row, s)| row.iter().map(|&x| s.apply(x)).collect())
        .collect();
    FeatureMatrix {
        channel_names: matrix.channel_names.clone(),
        dates: matrix.dates.clone(),
        channels,
        raw_close: matrix.raw_close.clone(),
        normalization: Some(stats.to_vec()),
    }
}

fn channel_stats(xs: &[f64]) -> ChannelStats {
    let n = xs.len() as f64;
    let center = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - center).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-12 * center.abs().max(1.0) {
        ChannelStats {
            center,
            scale: std,
            degenerate: false,
        }
    } else {
        ChannelStats {
            center,
            scale: 1.0,
            degenerate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// normalized next close
    #[default]
    Absolute,
    /// `(C_next − C_last)/C_last` on raw closes
    Roc,
}

impl TargetMode {
    pub fn model_name(self) -> &'static str {
        match self {
            TargetMode::Absolute => "C1D-LSTM",
            TargetMode::Roc => "C1D-ROC",
        }
    }
}

impl std::str::FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" => Ok(TargetMode::Absolute),
            "roc" => Ok(TargetMode::Roc),
            other => Err(Error::Config(format!("unknown target mode {other:?} (absolute|roc)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `c × w` feature window ending the day before the target
    pub input: Tensor,
    pub target: f64,
    /// matrix column of the target date
    pub target_index: usize,
    pub target_date: NaiveDate,
    /// raw close on the last window day
    pub prev_close: f64,
    /// raw close on the target date
    pub actual_close: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub samples: Vec<Sample>,
    pub window: usize,
    pub mode: TargetMode,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One sample per window: `channels[:, i..i+w]` predicts the target at column `i + w`.
pub fn make_windows(matrix: &FeatureMatrix, w: usize, mode: TargetMode, target_channel: usize) -> Result<WindowedDataset> {
    if w == 0 {
        return Err(Error::Parameter("window length must be positive".into()));
    }
    if target_channel >= matrix.n_channels() {
        return Err(Error::Parameter(format!("target channel {target_channel} out of range")));
    }
    if matrix.len() <= w {
        return Err(Error::InsufficientData(format!(
            "{} columns cannot hold a {w}-day window plus a target",
            matrix.len()
        )));
    }
    let samples = (0..matrix.len() - w)
        .map(|i| {
            let j = i + w;
            let prev = matrix.raw_close[j - 1];
            let target = match mode {
                TargetMode::Absolute => matrix.channels[target_channel][j],
                TargetMode::Roc => (matrix.raw_close[j] - prev) / prev,
            };
            Sample {
                input: matrix.window(i, w),
                target,
                target_index: j,
                target_date: matrix.dates[j],
                prev_close: prev,
                actual_close: matrix.raw_close[j],
            }
        })
        .collect();
    Ok(WindowedDataset {
        samples,
        window: w,
        mode,
    })
}

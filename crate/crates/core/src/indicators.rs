//! Technical indicators over daily OHLCV bars.
//!
//! Every indicator returns an [`IndicatorVector`] aligned with the input bars.
//! Entries before `warmup` are `NaN`; entries from `warmup` onward are finite.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Date-aligned open/high/low/close/volume bars for one instrument.
#[derive(Clone, Debug, PartialEq)]
pub struct OhlcvSeries {
    pub dates: Vec<NaiveDate>,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
}

impl OhlcvSeries {
    /// Validates lengths, date order, positivity and `low ≤ open, close ≤ high`.
    pub fn new(
        dates: Vec<NaiveDate>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        close: Vec<f64>,
        volume: Vec<f64>,
    ) -> Result<Self> {
        let n = dates.len();
        if n == 0 {
            return Err(Error::Data("series is empty".into()));
        }
        for (name, col) in [("open", &open), ("high", &high), ("low", &low), ("close", &close), ("volume", &volume)] {
            if col.len() != n {
                return Err(Error::Data(format!("column {name} has {} rows, dates have {n}", col.len())));
            }
        }
        for i in 0..n {
            if i > 0 && dates[i] <= dates[i - 1] {
                return Err(Error::Data(format!(
                    "row {}: date {} does not follow {}",
                    i + 1,
                    dates[i],
                    dates[i - 1]
                )));
            }
            Self::check_bar(i, open[i], high[i], low[i], close[i], volume[i])?;
        }
        Ok(Self {
            dates,
            open,
            high,
            low,
            close,
            volume,
        })
    }

    fn check_bar(i: usize, o: f64, h: f64, l: f64, c: f64, v: f64) -> Result<()> {
        let row = i + 1;
        if ![o, h, l, c, v].iter().all(|x| x.is_finite()) {
            return Err(Error::Data(format!("row {row}: non-finite value")));
        }
        if o <= 0.0 || h <= 0.0 || l <= 0.0 || c <= 0.0 {
            return Err(Error::Data(format!("row {row}: prices must be positive")));
        }
        if v < 0.0 {
            return Err(Error::Data(format!("row {row}: negative volume")));
        }
        if l > o.min(c) || o.max(c) > h {
            return Err(Error::Data(format!(
                "row {row}: bar violates low <= open, close <= high (o={o}, h={h}, l={l}, c={c})"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Bars `start..` as a new series.
    pub fn tail(&self, start: usize) -> Self {
        self.range(start, self.len())
    }

    pub fn range(&self, start: usize, end: usize) -> Self {
        Self {
            dates: self.dates[start..end].to_vec(),
            open: self.open[start..end].to_vec(),
            high: self.high[start..end].to_vec(),
            low: self.low[start..end].to_vec(),
            close: self.close[start..end].to_vec(),
            volume: self.volume[start..end].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorVector {
    pub name: String,
    pub values: Vec<f64>,
    /// first index holding a defined value
    pub warmup: usize,
}

impl IndicatorVector {
    fn new(name: impl Into<String>, values: Vec<f64>, warmup: usize) -> Self {
        Self {
            name: name.into(),
            values,
            warmup,
        }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        i >= self.warmup && i < self.values.len()
    }

    pub fn defined(&self) -> &[f64] {
        &self.values[self.warmup.min(self.values.len())..]
    }
}

fn check_period(name: &str, n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::Parameter(format!("{name} period must be >= 1")));
    }
    Ok(())
}

fn check_non_empty(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InsufficientData(format!("{name} needs at least one bar")));
    }
    Ok(())
}

/// EMA recursion `e_t = e_{t−1} + α·(x_t − e_{t−1})`, seeded with `x_start`.
fn ema_from(xs: &[f64], n: usize, start: usize) -> Vec<f64> {
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = vec![f64::NAN; xs.len()];
    if start >= xs.len() {
        return out;
    }
    let mut e = xs[start];
    out[start] = e;
    for t in start + 1..xs.len() {
        e += alpha * (xs[t] - e);
        out[t] = e;
    }
    out
}

/// Zero when `deviation` is rounding noise relative to `scale`.
fn flat_guard(deviation: f64, scale: f64) -> bool {
    deviation.abs() <= 64.0 * f64::EPSILON * scale.abs()
}

/// Exponential moving average with smoothing `2/(n+1)`, seeded with the first close.
pub fn ema(closes: &[f64], n: usize) -> Result<IndicatorVector> {
    check_period("EMA", n)?;
    check_non_empty("EMA", closes)?;
    Ok(IndicatorVector::new(format!("EMA{n}"), ema_from(closes, n, 0), 0))
}

/// EMA(12) − EMA(26).
pub fn diff(closes: &[f64]) -> Result<Vec<f64>> {
    check_non_empty("DIFF", closes)?;
    let fast = ema_from(closes, 12, 0);
    let slow = ema_from(closes, 26, 0);
    Ok(fast.iter().zip(&slow).map(|(a, b)| a - b).collect())
}

/// Moving-average convergence: an `n`-period EMA of `DIFF`, seeded with `DIFF_0`.
pub fn macd(closes: &[f64], n: usize) -> Result<IndicatorVector> {
    check_period("MACD", n)?;
    let d = diff(closes)?;
    Ok(IndicatorVector::new("MACD", ema_from(&d, n, 0), 0))
}

/// Commodity channel index on the typical price `(H + L + C)/3`.
pub fn cci(series: &OhlcvSeries, n: usize) -> Result<IndicatorVector> {
    check_period("CCI", n)?;
    check_non_empty("CCI", &series.close)?;
    let typical: Vec<f64> = (0..series.len())
        .map(|t| (series.high[t] + series.low[t] + series.close[t]) / 3.0)
        .collect();
    let mut out = vec![f64::NAN; typical.len()];
    for t in n - 1..typical.len() {
        let window = &typical[t + 1 - n..=t];
        let sm = window.iter().sum::<f64>() / n as f64;
        let dev = window.iter().map(|m| (m - sm).abs()).sum::<f64>() / n as f64;
        out[t] = if flat_guard(dev, sm) {
            0.0
        } else {
            (typical[t] - sm) / (0.015 * dev)
        };
    }
    Ok(IndicatorVector::new("CCI", out, n - 1))
}

/// Wilder's true range; the first bar uses `H − L`.
pub fn true_range(series: &OhlcvSeries) -> Vec<f64> {
    (0..series.len())
        .map(|t| {
            let hl = series.high[t] - series.low[t];
            if t == 0 {
                hl
            } else {
                let pc = series.close[t - 1];
                hl.max((series.high[t] - pc).abs()).max((series.low[t] - pc).abs())
            }
        })
        .collect()
}

/// Average true range: simple mean of the last `n` true ranges.
pub fn atr(series: &OhlcvSeries, n: usize) -> Result<IndicatorVector> {
    check_period("ATR", n)?;
    check_non_empty("ATR", &series.close)?;
    let tr = true_range(series);
    Ok(IndicatorVector::new("ATR", window_mean(&tr, n), n - 1))
}

fn window_mean(xs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; xs.len()];
    for t in n.saturating_sub(1)..xs.len() {
        out[t] = xs[t + 1 - n..=t].iter().sum::<f64>() / n as f64;
    }
    out
}

/// Simple `n`-period moving average of closes.
pub fn ma(closes: &[f64], n: usize) -> Result<IndicatorVector> {
    check_period("MA", n)?;
    check_non_empty("MA", closes)?;
    Ok(IndicatorVector::new(format!("MA{n}"), window_mean(closes, n), n - 1))
}

/// Bollinger middle band, MA(20).
pub fn boll_mid(closes: &[f64]) -> Result<IndicatorVector> {
    let mut v = ma(closes, 20)?;
    v.name = "BOLL".into();
    Ok(v)
}

/// `C_t − C_{t−lookback}`.
pub fn momentum(closes: &[f64], lookback: usize) -> Result<IndicatorVector> {
    check_period("MTM", lookback)?;
    check_non_empty("MTM", closes)?;
    let mut out = vec![f64::NAN; closes.len()];
    for t in lookback..closes.len() {
        out[t] = closes[t] - closes[t - lookback];
    }
    Ok(IndicatorVector::new(format!("MTM{lookback}"), out, lookback))
}

/// Percentage rate of change over `n` bars.
pub fn roc(closes: &[f64], n: usize) -> Result<IndicatorVector> {
    check_period("ROC", n)?;
    check_non_empty("ROC", closes)?;
    let mut out = vec![f64::NAN; closes.len()];
    for t in n..closes.len() {
        let base = closes[t - n];
        if base == 0.0 {
            return Err(Error::Numeric(format!("ROC: zero close at bar {}", t - n)));
        }
        out[t] = 100.0 * (closes[t] - base) / base;
    }
    Ok(IndicatorVector::new("ROC", out, n))
}

/// Stochastic momentum index `100·Ds/Dhl`.
///
/// `Ds` and `Dhl` are double EMAs (period `smoothing`) of `C − (HH + LL)/2` and
/// `HH − LL`, where `HH`/`LL` span the last `n` bars. A flat range gives 0.
pub fn smi(series: &OhlcvSeries, n: usize, smoothing: usize) -> Result<IndicatorVector> {
    check_period("SMI", n)?;
    check_period("SMI smoothing", smoothing)?;
    check_non_empty("SMI", &series.close)?;
    let len = series.len();
    let start = n - 1;
    let mut rel = vec![f64::NAN; len];
    let mut range = vec![f64::NAN; len];
    for t in start..len {
        let hh = series.high[t + 1 - n..=t].iter().copied().fold(f64::MIN, f64::max);
        let ll = series.low[t + 1 - n..=t].iter().copied().fold(f64::MAX, f64::min);
        rel[t] = series.close[t] - (hh + ll) / 2.0;
        range[t] = hh - ll;
    }
    let ds = ema_from(&ema_from(&rel, smoothing, start), smoothing, start);
    let dhl = ema_from(&ema_from(&range, smoothing, start), smoothing, start);
    let mut out = vec![f64::NAN; len];
    for t in start..len {
        out[t] = if flat_guard(dhl[t], series.close[t]) {
            0.0
        } else {
            100.0 * ds[t] / dhl[t]
        };
    }
    Ok(IndicatorVector::new("SMI", out, start))
}

/// Denominator of the per-bar accumulation/distribution term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WvadDenominator {
    /// `H − L`; a zero range contributes nothing.
    #[default]
    Range,
    /// `H − C`, floored at `1e-12`.
    HighMinusClose,
}

/// Williams's variable accumulation/distribution, cumulative from the first bar.
pub fn wvad(series: &OhlcvSeries, denominator: WvadDenominator) -> Result<IndicatorVector> {
    check_non_empty("WVAD", &series.close)?;
    let mut out = Vec::with_capacity(series.len());
    let mut ad = 0.0;
    for t in 0..series.len() {
        let (h, l, c, v) = (series.high[t], series.low[t], series.close[t], series.volume[t]);
        let num = (c - l) - (h - c);
        let term = match denominator {
            WvadDenominator::Range => {
                let r = h - l;
                if r > 0.0 {
                    num / r * v
                } else {
                    0.0
                }
            }
            WvadDenominator::HighMinusClose => num / (h - c).max(1e-12) * v,
        };
        ad += term;
        out.push(ad);
    }
    Ok(IndicatorVector::new("WVAD", out, 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorKind {
    Macd,
    Cci,
    Atr,
    Boll,
    Ema20,
    Ma5,
    Ma10,
    Mtm6,
    Mtm12,
    Roc,
    Smi,
    Wvad,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 12] = [
        IndicatorKind::Macd,
        IndicatorKind::Cci,
        IndicatorKind::Atr,
        IndicatorKind::Boll,
        IndicatorKind::Ema20,
        IndicatorKind::Ma5,
        IndicatorKind::Ma10,
        IndicatorKind::Mtm6,
        IndicatorKind::Mtm12,
        IndicatorKind::Roc,
        IndicatorKind::Smi,
        IndicatorKind::Wvad,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IndicatorKind::Macd => "MACD",
            IndicatorKind::Cci => "CCI",
            IndicatorKind::Atr => "ATR",
            IndicatorKind::Boll => "BOLL",
            IndicatorKind::Ema20 => "EMA20",
            IndicatorKind::Ma5 => "MA5",
            IndicatorKind::Ma10 => "MA10",
            IndicatorKind::Mtm6 => "MTM6",
            IndicatorKind::Mtm12 => "MTM12",
            IndicatorKind::Roc => "ROC",
            IndicatorKind::Smi => "SMI",
            IndicatorKind::Wvad => "WVAD",
        }
    }

    /// Whether the indicator is a price difference or rate (zero on constant prices).
    pub fn is_momentum_family(self) -> bool {
        matches!(
            self,
            IndicatorKind::Macd
                | IndicatorKind::Cci
                | IndicatorKind::Mtm6
                | IndicatorKind::Mtm12
                | IndicatorKind::Roc
                | IndicatorKind::Smi
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    pub channels: Vec<IndicatorKind>,
    pub macd_period: usize,
    pub cci_period: usize,
    pub atr_period: usize,
    pub roc_period: usize,
    pub smi_period: usize,
    pub smi_smoothing: usize,
    /// trading days per month for the MTM6/MTM12 lookbacks
    pub trading_days_per_month: usize,
    pub wvad_denominator: WvadDenominator,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            channels: vec![
                IndicatorKind::Macd,
                IndicatorKind::Cci,
                IndicatorKind::Atr,
                IndicatorKind::Boll,
                IndicatorKind::Ema20,
                IndicatorKind::Ma5,
                IndicatorKind::Mtm6,
                IndicatorKind::Roc,
                IndicatorKind::Smi,
                IndicatorKind::Wvad,
            ],
            macd_period: 9,
            cci_period: 20,
            atr_period: 14,
            roc_period: 12,
            smi_period: 14,
            smi_smoothing: 3,
            trading_days_per_month: 21,
            wvad_denominator: WvadDenominator::Range,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Parameter("indicator channel list is empty".into()));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return Err(Error::Parameter(format!("indicator {} listed twice", c.label())));
            }
        }
        Ok(())
    }

    /// First index at which `kind` is defined.
    pub fn warmup_of(&self, kind: IndicatorKind) -> usize {
        match kind {
            IndicatorKind::Macd | IndicatorKind::Ema20 | IndicatorKind::Wvad => 0,
            IndicatorKind::Cci => self.cci_period.saturating_sub(1),
            IndicatorKind::Atr => self.atr_period.saturating_sub(1),
            IndicatorKind::Boll => 19,
            IndicatorKind::Ma5 => 4,
            IndicatorKind::Ma10 => 9,
            IndicatorKind::Mtm6 => 6 * self.trading_days_per_month,
            IndicatorKind::Mtm12 => 12 * self.trading_days_per_month,
            IndicatorKind::Roc => self.roc_period,
            IndicatorKind::Smi => self.smi_period.saturating_sub(1),
        }
    }

    /// Common warm-up of the configured channel set.
    pub fn warmup(&self) -> usize {
        self.channels.iter().map(|&k| self.warmup_of(k)).max().unwrap_or(0)
    }
}

pub fn compute(series: &OhlcvSeries, kind: IndicatorKind, config: &IndicatorConfig) -> Result<IndicatorVector> {
    let c = &series.close;
    let month = config.trading_days_per_month;
    let mut v = match kind {
        IndicatorKind::Macd => macd(c, config.macd_period)?,
        IndicatorKind::Cci => cci(series, config.cci_period)?,
        IndicatorKind::Atr => atr(series, config.atr_period)?,
        IndicatorKind::Boll => boll_mid(c)?,
        IndicatorKind::Ema20 => ema(c, 20)?,
        IndicatorKind::Ma5 => ma(c, 5)?,
        IndicatorKind::Ma10 => ma(c, 10)?,
        IndicatorKind::Mtm6 => momentum(c, 6 * month)?,
        IndicatorKind::Mtm12 => momentum(c, 12 * month)?,
        IndicatorKind::Roc => roc(c, config.roc_period)?,
        IndicatorKind::Smi => smi(series, config.smi_period, config.smi_smoothing)?,
        IndicatorKind::Wvad => wvad(series, config.wvad_denominator)?,
    };
    v.name = kind.label().to_string();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorSet {
    pub vectors: Vec<IndicatorVector>,
    /// first index at which every vector is defined
    pub warmup: usize,
}

/// Computes the configured channel set over `series`.
pub fn compute_all(series: &OhlcvSeries, config: &IndicatorConfig) -> Result<IndicatorSet> {
    config.validate()?;
    let warmup = config.warmup();
    if series.len() <= warmup {
        return Err(Error::InsufficientData(format!(
            "{} bars do not cover the {warmup}-bar indicator warm-up",
            series.len()
        )));
    }
    let vectors = config
        .channels
        .iter()
        .map(|&k| compute(series, k, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(IndicatorSet { vectors, warmup })
}

//! Geometric-random-walk market generator for tests and demos.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MacroSeries;
use crate::error::{Error, Result};
use crate::indicators::OhlcvSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub initial_price: f64,
    /// daily log-return mean
    pub drift: f64,
    /// daily log-return standard deviation
    pub volatility: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2008, 7, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2016, 9, 30).expect("valid date"),
            initial_price: 3000.0,
            drift: 2e-4,
            volatility: 0.012,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedMarket {
    pub prices: OhlcvSeries,
    pub usd_index: MacroSeries,
    pub interbank_rate: MacroSeries,
}

/// Weekday bars whose closes follow a geometric random walk, plus two slowly
/// drifting macro series observed on the same days.
pub fn simulate_market(config: &SimulationConfig) -> Result<SimulatedMarket> {
    if config.end <= config.start || !(config.initial_price > 0.0) || !(config.volatility >= 0.0) {
        return Err(Error::Parameter("invalid simulation configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut dates = Vec::new();
    let mut day = config.start;
    while day <= config.end {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(day);
        }
        day = day + Days::new(1);
    }
    let n = dates.len();
    let (mut open, mut high, mut low, mut close, mut volume) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut usd, mut rate) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut prev = config.initial_price;
    let (mut u, mut r) = (85.0_f64, 3.0_f64);
    for _ in 0..n {
        let gap: f64 = 0.2 * config.volatility * std_normal.sample(&mut rng);
        let o = prev * gap.exp();
        let ret = config.drift + config.volatility * std_normal.sample(&mut rng);
        let c = prev * ret.exp();
        let wick_hi: f64 = 0.5 * config.volatility * std_normal.sample(&mut rng).abs();
        let wick_lo: f64 = 0.5 * config.volatility * std_normal.sample(&mut rng).abs();
        open.push(o);
        close.push(c);
        high.push(o.max(c) * wick_hi.exp());
        low.push(o.min(c) * (-wick_lo).exp());
        volume.push(1e6 * (0.3 * std_normal.sample(&mut rng) + rng.random_range(-0.1..0.1)).exp());
        u *= (0.004 * std_normal.sample(&mut rng)).exp();
        r = (r + 0.01 * std_normal.sample(&mut rng)).max(0.05);
        usd.push(u);
        rate.push(r);
        prev = c;
    }
    Ok(SimulatedMarket {
        prices: OhlcvSeries::new(dates.clone(), open, high, low, close, volume)?,
        usd_index: MacroSeries::new("usd_index", dates.clone(), usd)?,
        interbank_rate: MacroSeries::new("interbank_rate", dates, rate)?,
    })
}

#![allow(dead_code)]

use c1d_forecast::indicators::{IndicatorConfig, IndicatorKind, OhlcvSeries};
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Valid random bars: log-normal closes, wicks around open/close, positive volume.
pub fn random_ohlcv(len: usize, seed: u64) -> OhlcvSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::<f64>::new(0.0, 0.02).unwrap();
    let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
    let mut prev: f64 = rng.random_range(20.0..200.0);
    let (mut o, mut h, mut l, mut c, mut v) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..len {
        let open = prev * (0.3 * step.sample(&mut rng)).exp();
        let close = prev * step.sample(&mut rng).exp();
        o.push(open);
        c.push(close);
        h.push(open.max(close) * (1.0 + rng.random_range(0.0..0.02)));
        l.push(open.min(close) * (1.0 - rng.random_range(0.0..0.02)));
        v.push(rng.random_range(1e3..1e6));
        prev = close;
    }
    let dates = (0..len).map(|i| start + Days::new(i as u64)).collect();
    OhlcvSeries::new(dates, o, h, l, c, v).unwrap()
}

pub fn scaled(s: &OhlcvSeries, k: f64) -> OhlcvSeries {
    let m = |x: &[f64]| x.iter().map(|v| v * k).collect::<Vec<_>>();
    OhlcvSeries::new(s.dates.clone(), m(&s.open), m(&s.high), m(&s.low), m(&s.close), s.volume.clone()).unwrap()
}

pub fn close_to(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

// Loop oracles. `None` marks the warm-up.

pub fn o_ema(x: &[f64], n: usize) -> Vec<f64> {
    let a = 2.0 / (n as f64 + 1.0);
    let mut out = vec![x[0]];
    for t in 1..x.len() {
        let prev = out[t - 1];
        out.push(a * x[t] + (1.0 - a) * prev);
    }
    out
}

pub fn o_macd(c: &[f64], n: usize) -> Vec<f64> {
    let fast = o_ema(c, 12);
    let slow = o_ema(c, 26);
    let diff: Vec<f64> = (0..c.len()).map(|t| fast[t] - slow[t]).collect();
    o_ema(&diff, n)
}

pub fn o_cci(s: &OhlcvSeries, n: usize) -> Vec<Option<f64>> {
    let m: Vec<f64> = (0..s.len()).map(|t| (s.high[t] + s.low[t] + s.close[t]) / 3.0).collect();
    (0..s.len())
        .map(|t| {
            if t + 1 < n {
                return None;
            }
            let mut sm = 0.0;
            for i in t + 1 - n..=t {
                sm += m[i];
            }
            sm /= n as f64;
            let mut d = 0.0;
            for i in t + 1 - n..=t {
                d += (m[i] - sm).abs();
            }
            d /= n as f64;
            Some(if d == 0.0 { 0.0 } else { (m[t] - sm) / (0.015 * d) })
        })
        .collect()
}

pub fn o_atr(s: &OhlcvSeries, n: usize) -> Vec<Option<f64>> {
    let mut tr = Vec::new();
    for t in 0..s.len() {
        let mut r = s.high[t] - s.low[t];
        if t > 0 {
            let a = (s.high[t] - s.close[t - 1]).abs();
            let b = (s.low[t] - s.close[t - 1]).abs();
            if a > r {
                r = a;
            }
            if b > r {
                r = b;
            }
        }
        tr.push(r);
    }
    o_ma(&tr, n)
}

pub fn o_ma(x: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..x.len())
        .map(|t| {
            if t + 1 < n {
                return None;
            }
            let mut s = 0.0;
            for i in 0..n {
                s += x[t - i];
            }
            Some(s / n as f64)
        })
        .collect()
}

pub fn o_mtm(c: &[f64], k: usize) -> Vec<Option<f64>> {
    (0..c.len()).map(|t| (t >= k).then(|| c[t] - c[t - k])).collect()
}

pub fn o_roc(c: &[f64], k: usize) -> Vec<Option<f64>> {
    (0..c.len()).map(|t| (t >= k).then(|| (c[t] - c[t - k]) / c[t - k] * 100.0)).collect()
}

pub fn o_smi(s: &OhlcvSeries, n: usize, smoothing: usize) -> Vec<Option<f64>> {
    let a = 2.0 / (smoothing as f64 + 1.0);
    let mut out = vec![None; s.len()];
    let (mut e1s, mut e2s, mut e1r, mut e2r) = (0.0, 0.0, 0.0, 0.0);
    for t in n - 1..s.len() {
        let mut hh = s.high[t];
        let mut ll = s.low[t];
        for i in t + 1 - n..=t {
            if s.high[i] > hh {
                hh = s.high[i];
            }
            if s.low[i] < ll {
                ll = s.low[i];
            }
        }
        let rel = s.close[t] - 0.5 * (hh + ll);
        let range = hh - ll;
        if t == n - 1 {
            (e1s, e2s, e1r, e2r) = (rel, rel, range, range);
        } else {
            e1s = a * rel + (1.0 - a) * e1s;
            e2s = a * e1s + (1.0 - a) * e2s;
            e1r = a * range + (1.0 - a) * e1r;
            e2r = a * e1r + (1.0 - a) * e2r;
        }
        out[t] = Some(if e2r == 0.0 { 0.0 } else { 100.0 * e2s / e2r });
    }
    out
}

pub fn o_wvad(s: &OhlcvSeries) -> Vec<f64> {
    let mut ad = 0.0;
    let mut out = Vec::new();
    for t in 0..s.len() {
        let r = s.high[t] - s.low[t];
        if r > 0.0 {
            ad += ((s.close[t] - s.low[t]) - (s.high[t] - s.close[t])) / r * s.volume[t];
        }
        out.push(ad);
    }
    out
}

/// Oracle values of one indicator channel under `cfg`.
pub fn oracle(s: &OhlcvSeries, kind: IndicatorKind, cfg: &IndicatorConfig) -> Vec<Option<f64>> {
    let all = |v: Vec<f64>| v.into_iter().map(Some).collect::<Vec<_>>();
    let c = &s.close;
    let month = cfg.trading_days_per_month;
    match kind {
        IndicatorKind::Macd => all(o_macd(c, cfg.macd_period)),
        IndicatorKind::Cci => o_cci(s, cfg.cci_period),
        IndicatorKind::Atr => o_atr(s, cfg.atr_period),
        IndicatorKind::Boll => o_ma(c, 20),
        IndicatorKind::Ema20 => all(o_ema(c, 20)),
        IndicatorKind::Ma5 => o_ma(c, 5),
        IndicatorKind::Ma10 => o_ma(c, 10),
        IndicatorKind::Mtm6 => o_mtm(c, 6 * month),
        IndicatorKind::Mtm12 => o_mtm(c, 12 * month),
        IndicatorKind::Roc => o_roc(c, cfg.roc_period),
        IndicatorKind::Smi => o_smi(s, cfg.smi_period, cfg.smi_smoothing),
        IndicatorKind::Wvad => all(o_wvad(s)),
    }
}

/// Indicators whose value depends on the whole history through an EMA recursion.
pub fn is_recursive(kind: IndicatorKind) -> bool {
    matches!(kind, IndicatorKind::Macd | IndicatorKind::Ema20 | IndicatorKind::Smi)
}

/// Longest EMA period feeding `kind`.
pub fn recursive_period(kind: IndicatorKind, cfg: &IndicatorConfig) -> usize {
    match kind {
        IndicatorKind::Macd => 26 + cfg.macd_period,
        IndicatorKind::Ema20 => 20,
        IndicatorKind::Smi => cfg.smi_smoothing,
        _ => 0,
    }
}

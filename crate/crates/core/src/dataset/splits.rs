//! Yearly walk-forward train/test folds.

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::error::{Error, Result};

/// Consecutive one-year test intervals starting at `first_test_start`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearCalendar {
    pub first_test_start: NaiveDate,
    pub years: usize,
}

impl YearCalendar {
    /// Six October-to-September years, 2010-10-01 through 2016-09-30.
    pub fn paper() -> Self {
        Self {
            first_test_start: NaiveDate::from_ymd_opt(2010, 10, 1).expect("valid date"),
            years: 6,
        }
    }

    /// `paper`, or `YYYY-MM-DD:N` for `N` years starting on the given date.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec.eq_ignore_ascii_case("paper") {
            return Ok(Self::paper());
        }
        let (date, years) = spec
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("calendar {spec:?} is neither `paper` nor `YYYY-MM-DD:N`")))?;
        let first_test_start = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("calendar start {date:?}: {e}")))?;
        let years = years
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("calendar year count {years:?}: {e}")))?;
        if years == 0 {
            return Err(Error::Config("calendar needs at least one year".into()));
        }
        Ok(Self {
            first_test_start,
            years,
        })
    }

    pub fn intervals(&self) -> Vec<(NaiveDate, NaiveDate)> {
        (0..self.years)
            .map(|k| {
                let start = add_years(self.first_test_start, k as i32);
                let end = add_years(self.first_test_start, k as i32 + 1) - Days::new(1);
                (start, end)
            })
            .collect()
    }
}

fn add_years(d: NaiveDate, years: i32) -> NaiveDate {
    d.with_year(d.year() + years)
        // 29 February rolls to 28 February
        .or_else(|| (d - Days::new(1)).with_year(d.year() + years))
        .expect("representable date")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSplit {
    /// 1-based
    pub year_index: usize,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    /// the data has history before `test_start` and reaches (within a week of) `test_end`
    pub available: bool,
}

/// Tolerance for the data ending on a weekend or holiday before the test end.
const COVERAGE_SLACK_DAYS: u64 = 7;

/// Yearly folds of `calendar` checked against the trading `dates` of the data.
pub fn split_years(dates: &[NaiveDate], calendar: &YearCalendar) -> Vec<YearSplit> {
    calendar
        .intervals()
        .into_iter()
        .enumerate()
        .map(|(k, (test_start, test_end))| {
            let available = match (dates.first(), dates.last()) {
                (Some(&first), Some(&last)) => {
                    first < test_start && last + Days::new(COVERAGE_SLACK_DAYS) >= test_end
                }
                _ => false,
            };
            YearSplit {
                year_index: k + 1,
                test_start,
                test_end,
                available,
            }
        })
        .collect()
}

/// Sample indices of one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    /// chronological tail of the training samples held out for early stopping
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Training samples have targets strictly before the test interval; test samples have targets inside it.
pub fn partition(dataset: &WindowedDataset, split: &YearSplit, validation_fraction: f64) -> Result<Partition> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::Parameter(format!(
            "validation fraction {validation_fraction} outside [0, 1)"
        )));
    }
    let mut fit = Vec::new();
    let mut test = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        if s.target_date < split.test_start {
            fit.push(i);
        } else if s.target_date <= split.test_end {
            test.push(i);
        }
    }
    let n_val = ((fit.len() as f64) * validation_fraction).round() as usize;
    let n_val = if validation_fraction > 0.0 && fit.len() > 1 { n_val.max(1) } else { n_val };
    let validation = fit.split_off(fit.len() - n_val);
    Ok(Partition {
        train: fit,
        validation,
        test,
    })
}

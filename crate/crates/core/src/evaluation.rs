//! Forecast accuracy metrics and per-year report tables.
//!
//! Report table CSV (`write_table_csv`):
//!
//! ```text
//! panel,model,source,Year1,...,YearN,Average
//! Panel A.MAPE,C1D-ROC,computed,0.012345,...
//! Panel A.MAPE,WSAEs-LSTM,transcribed,0.025,...
//! ```
//!
//! Panels come in the order MAPE, correlation coefficient, Theil U. Computed
//! cells carry six decimals; transcribed cells are the published strings.
//! An undefined correlation is written as `NaN`. Curve CSVs have the header
//! `date,actual,predicted`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::{self, ReferenceRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mape,
    Correlation,
    TheilU,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mape, Metric::Correlation, Metric::TheilU];

    pub fn panel_label(self) -> &'static str {
        match self {
            Metric::Mape => "Panel A.MAPE",
            Metric::Correlation => "Panel B.Correlation coefficient",
            Metric::TheilU => "Panel C.Theil U",
        }
    }
}

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < min_len {
        return Err(Error::dim(format!("need at least {min_len} points, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("series contain non-finite values".into()));
    }
    Ok(())
}

/// Mean absolute error relative to the actual value.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted, 1)?;
    if actual.contains(&0.0) {
        return Err(Error::Numeric("MAPE is undefined for a zero actual value".into()));
    }
    let sum: f64 = actual.iter().zip(predicted).map(|(y, p)| ((y - p) / y).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// Pearson correlation coefficient; a constant series is a numeric error.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Numeric("correlation is undefined for a constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// `rms(y − y*) / (rms(y) + rms(y*))`, in `[0, 1]`.
pub fn theil_u(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted, 1)?;
    let n = actual.len() as f64;
    let rms = |it: &mut dyn Iterator<Item = f64>| (it.map(|v| v * v).sum::<f64>() / n).sqrt();
    let denom = rms(&mut actual.iter().copied()) + rms(&mut predicted.iter().copied());
    if denom == 0.0 {
        return Err(Error::Numeric("Theil U is undefined when both series are zero".into()));
    }
    let num = rms(&mut actual.iter().zip(predicted).map(|(a, p)| a - p));
    Ok(num / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub date: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
}

/// Test-interval forecasts of one year-model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearPredictions {
    /// 1-based
    pub year_index: usize,
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `None` for the average row
    pub year_index: Option<usize>,
    pub mape: f64,
    /// `None` when either series is constant
    pub correlation: Option<f64>,
    pub theil_u: f64,
}

impl MetricRow {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mape => Some(self.mape),
            Metric::Correlation => self.correlation,
            Metric::TheilU => Some(self.theil_u),
        }
    }
}

/// A transcribed row carried alongside computed results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscribedRow {
    pub model: String,
    pub metric: Metric,
    pub years: Vec<String>,
    pub average: String,
}

impl From<&ReferenceRow> for TranscribedRow {
    fn from(r: &ReferenceRow) -> Self {
        Self {
            model: r.model.to_string(),
            metric: r.metric,
            years: r.years.iter().map(|s| s.to_string()).collect(),
            average: r.average.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub market: String,
    pub model: String,
    pub rows: Vec<MetricRow>,
    pub average: MetricRow,
    pub curves: Vec<YearPredictions>,
    /// published figures for the same market, if it is one of the transcribed ones
    pub transcribed: Vec<TranscribedRow>,
}

fn year_row(year: &YearPredictions) -> Result<MetricRow> {
    let actual: Vec<f64> = year.points.iter().map(|p| p.actual).collect();
    let predicted: Vec<f64> = year.points.iter().map(|p| p.predicted).collect();
    let ctx = |e: Error| match e {
        Error::Dimension(m) => Error::Data(format!("year {}: {m}", year.year_index)),
        Error::Numeric(m) => Error::Numeric(format!("year {}: {m}", year.year_index)),
        other => other,
    };
    let correlation = match correlation(&actual, &predicted) {
        Ok(r) => Some(r),
        Err(Error::Numeric(_)) | Err(Error::Dimension(_)) if !actual.is_empty() => None,
        Err(e) => return Err(ctx(e)),
    };
    Ok(MetricRow {
        year_index: Some(year.year_index),
        mape: mape(&actual, &predicted).map_err(ctx)?,
        correlation,
        theil_u: theil_u(&actual, &predicted).map_err(ctx)?,
    })
}

/// Per-year metric rows plus their arithmetic mean.
pub fn build_report(market: &str, model: &str, years: Vec<YearPredictions>) -> Result<EvaluationReport> {
    if years.is_empty() {
        return Err(Error::Data("a report needs at least one year".into()));
    }
    let rows = years.iter().map(year_row).collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let correlation = rows
        .iter()
        .map(|r| r.correlation)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    let average = MetricRow {
        year_index: None,
        mape: rows.iter().map(|r| r.mape).sum::<f64>() / n,
        correlation,
        theil_u: rows.iter().map(|r| r.theil_u).sum::<f64>() / n,
    };
    Ok(EvaluationReport {
        market: market.to_string(),
        model: model.to_string(),
        rows,
        average,
        curves: years,
        transcribed: reference::rows_for_market(market).into_iter().map(TranscribedRow::from).collect(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.6}"))
}

/// Table of every report for one market, panels in MAPE, R, Theil U order.
pub fn write_table_csv<W: Write>(out: W, reports: &[EvaluationReport]) -> Result<()> {
    let max_year = reports
        .iter()
        .flat_map(|r| r.rows.iter().filter_map(|row| row.year_index))
        .max()
        .unwrap_or(0)
        .max(if reports.iter().any(|r| !r.transcribed.is_empty()) { 6 } else { 0 });
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["panel".to_string(), "model".to_string(), "source".to_string()];
    header.extend((1..=max_year).map(|y| format!("Year{y}")));
    header.push("Average".into());
    w.write_record(&header).map_err(csv_err)?;
    let transcribed = reports.first().map(|r| r.transcribed.clone()).unwrap_or_default();
    for metric in Metric::ALL {
        for r in reports {
            let mut rec = vec![metric.panel_label().to_string(), r.model.clone(), "computed".into()];
            for y in 1..=max_year {
                let v = r.rows.iter().find(|row| row.year_index == Some(y));
                rec.push(v.map_or_else(String::new, |row| cell(row.value(metric))));
            }
            rec.push(cell(r.average.value(metric)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        for t in transcribed.iter().filter(|t| t.metric == metric) {
            let mut rec = vec![metric.panel_label().to_string(), t.model.clone(), "transcribed".into()];
            for y in 1..=max_year {
                rec.push(t.years.get(y - 1).cloned().unwrap_or_default());
            }
            rec.push(t.average.clone());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))
}

pub fn write_report_json<W: Write>(out: W, reports: &[EvaluationReport]) -> Result<()> {
    serde_json::to_writer_pretty(out, reports).map_err(|e| Error::Data(format!("json write failed: {e}")))
}

pub fn read_report_json<R: Read>(input: R) -> Result<Vec<EvaluationReport>> {
    serde_json::from_reader(input).map_err(|e| Error::Format(format!("report json: {e}")))
}

pub const CURVE_HEADER: [&str; 3] = ["date", "actual", "predicted"];

pub fn write_curve<W: Write>(out: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for p in points {
        // shortest round-trip representation
        w.write_record([p.date.to_string(), p.actual.to_string(), p.predicted.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))
}

pub fn read_curve<R: Read>(input: R) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", CURVE_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let bad = |m: String| Error::Parse { line, message: m };
        if rec.len() != 3 {
            return Err(bad("expected date,actual,predicted".into()));
        }
        points.push(CurvePoint {
            date: NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(e.to_string()))?,
            actual: rec[1].parse().map_err(|e| bad(format!("actual: {e}")))?,
            predicted: rec[2].parse().map_err(|e| bad(format!("predicted: {e}")))?,
        });
    }
    Ok(points)
}

/// File name of one curve: `<market>_<model>_year<k>.csv` with model and market lower-cased.
pub fn curve_file_name(market: &str, model: &str, year_index: usize) -> String {
    let slug = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect()
    };
    format!("{}_{}_year{year_index}.csv", slug(market), slug(model))
}

/// Writes one curve CSV per year into `dir`, returning the paths.
pub fn export_curves(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report
        .curves
        .iter()
        .map(|year| {
            let path = dir.join(curve_file_name(&report.market, &report.model, year.year_index));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_curve(file, &year.points)?;
            Ok(path)
        })
        .collect()
}

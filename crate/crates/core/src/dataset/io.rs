//! CSV ingestion.
//!
//! Price files carry the header `date,open,high,low,close,volume`; macro files
//! carry `date,value`. Dates are ISO-8601 (`YYYY-MM-DD`).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::OhlcvSeries;

pub const OHLCV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];
pub const MACRO_HEADER: [&str; 2] = ["date", "value"];

/// What to do with a row that has an empty field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Error,
    Skip,
}

/// A dated scalar series such as a currency index or an interbank rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroSeries {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl MacroSeries {
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if dates.is_empty() {
            return Err(Error::Data(format!("macro series {name} is empty")));
        }
        if dates.len() != values.len() {
            return Err(Error::Data(format!("macro series {name}: dates and values differ in length")));
        }
        if let Some(i) = (1..dates.len()).find(|&i| dates[i] <= dates[i - 1]) {
            return Err(Error::Data(format!(
                "macro series {name}: row {} date {} is not after {}",
                i + 1,
                dates[i],
                dates[i - 1]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("macro series {name} has non-finite values")));
        }
        Ok(Self { name, dates, values })
    }
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("bad date {s:?}: {e}"),
    })
}

fn parse_num(s: &str, column: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("bad {column} value {s:?}: {e}"),
    })
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(input)
}

pub fn parse_ohlcv<R: Read>(input: R, missing: MissingPolicy) -> Result<OhlcvSeries> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &OHLCV_HEADER)?;
    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut dates = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != OHLCV_HEADER.len() || rec.iter().any(|f| f.trim().is_empty()) {
            match missing {
                MissingPolicy::Skip => continue,
                MissingPolicy::Error => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {} non-empty fields", OHLCV_HEADER.len()),
                    })
                }
            }
        }
        dates.push(parse_date(&rec[0], line)?);
        for (k, col) in cols.iter_mut().enumerate() {
            col.push(parse_num(&rec[k + 1], OHLCV_HEADER[k + 1], line)?);
        }
        lines.push(line);
    }
    let [open, high, low, close, volume] = cols;
    OhlcvSeries::new(dates, open, high, low, close, volume).map_err(|e| match e {
        // report file line numbers rather than data-row indices
        Error::Data(msg) => Error::Data(relabel_row(&msg, &lines)),
        other => other,
    })
}

fn relabel_row(msg: &str, lines: &[usize]) -> String {
    let Some(rest) = msg.strip_prefix("row ") else {
        return msg.to_string();
    };
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    match digits.parse::<usize>() {
        Ok(row) if row >= 1 && row <= lines.len() => {
            format!("line {}{}", lines[row - 1], &rest[digits.len()..])
        }
        _ => msg.to_string(),
    }
}

pub fn load_ohlcv(path: &Path, missing: MissingPolicy) -> Result<OhlcvSeries> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ohlcv(f, missing)
}

pub fn parse_macro<R: Read>(input: R, name: &str) -> Result<MacroSeries> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &MACRO_HEADER)?;
    let (mut dates, mut values) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 || rec.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::Parse {
                line,
                message: "expected date,value".into(),
            });
        }
        dates.push(parse_date(&rec[0], line)?);
        values.push(parse_num(&rec[1], "value", line)?);
    }
    MacroSeries::new(name, dates, values)
}

pub fn load_macro(path: &Path, name: &str) -> Result<MacroSeries> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_macro(f, name)
}

pub fn write_ohlcv<W: Write>(out: W, series: &OhlcvSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
    w.write_record(OHLCV_HEADER).map_err(err)?;
    for i in 0..series.len() {
        w.write_record([
            series.dates[i].to_string(),
            series.open[i].to_string(),
            series.high[i].to_string(),
            series.low[i].to_string(),
            series.close[i].to_string(),
            series.volume[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))
}

pub fn write_macro<W: Write>(out: W, series: &MacroSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
    w.write_record(MACRO_HEADER).map_err(err)?;
    for (d, v) in series.dates.iter().zip(&series.values) {
        w.write_record([d.to_string(), v.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))
}

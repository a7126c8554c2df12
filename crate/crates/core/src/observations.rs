//! Loading and validation of daily observation series.
//!
//! The input is a CSV file with the header
//! `date,hospitalized,recovered_cum,deaths_cum`:
//!
//! * `date` is an ISO-8601 calendar date; rows are consecutive days.
//! * `hospitalized` is a **stock**: agents currently under treatment.
//! * `recovered_cum` and `deaths_cum` are **cumulative** counts of agents
//!   who left treatment alive or dead. They may never decrease.
//!
//! Many public datasets publish daily new recoveries or deaths instead of
//! running totals; convert those before loading.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::assimilation::Observation;

pub const COLUMNS: [&str; 4] = ["date", "hospitalized", "recovered_cum", "deaths_cum"];
pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Default calendar date of simulation day 0.
pub fn default_sim_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 17).expect("valid date")
}

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed CSV: {message}")]
    Csv { line: u64, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("unexpected extra column(s) {0:?} (use --lax-columns to ignore them)")]
    ExtraColumns(Vec<String>),
    #[error("line {line}: bad date `{value}`, expected YYYY-MM-DD")]
    BadDate { line: u64, value: String },
    #[error("line {line}: column `{column}` has non-integer value `{value}`")]
    BadValue {
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("line {line}: column `{column}` is negative ({value})")]
    Negative {
        line: u64,
        column: &'static str,
        value: i64,
    },
    #[error("line {line}: gap in dates, expected {expected} but found {found}")]
    Gap {
        line: u64,
        expected: NaiveDate,
        found: NaiveDate,
    },
    #[error("line {line}: cumulative column `{column}` decreases from {previous} to {value}")]
    Decreasing {
        line: u64,
        column: &'static str,
        previous: u64,
        value: u64,
    },
    #[error("line {line}: date {date} precedes the simulation start {start}")]
    BeforeStart {
        line: u64,
        date: NaiveDate,
        start: NaiveDate,
    },
    #[error("first observation {date} is day {found} of the simulation, expected day {expected}")]
    Misaligned {
        date: NaiveDate,
        expected: u64,
        found: u64,
    },
}

impl ObservationError {
    /// `true` for problems with the data itself, as opposed to I/O.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, ObservationError::Io { .. })
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub sim_start_date: NaiveDate,
    /// Required day index of the first record, if any.
    pub first_obs_day_index: Option<u64>,
    /// Ignore columns beyond the four known ones.
    pub lax_columns: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            sim_start_date: default_sim_start(),
            first_obs_day_index: Some(49),
            lax_columns: false,
        }
    }
}

/// A validated, gap-free run of daily observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeries {
    start_date: NaiveDate,
    records: Vec<Observation>,
}

impl ObservationSeries {
    /// Validate records already carrying day indices relative to `start_date`.
    pub fn new(start_date: NaiveDate, records: Vec<Observation>) -> Result<Self, ObservationError> {
        for (i, pair) in records.windows(2).enumerate() {
            let (prev, cur) = (&pair[0], &pair[1]);
            let line = i as u64 + 3;
            if cur.day_index != prev.day_index + 1 {
                return Err(ObservationError::Gap {
                    line,
                    expected: day_to_date(start_date, prev.day_index + 1),
                    found: day_to_date(start_date, cur.day_index),
                });
            }
            check_monotone(line, prev, cur)?;
        }
        Ok(Self {
            start_date,
            records,
        })
    }

    pub fn empty(start_date: NaiveDate) -> Self {
        Self {
            start_date,
            records: Vec::new(),
        }
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_day(&self) -> Option<u64> {
        self.records.first().map(|o| o.day_index)
    }

    pub fn date_of(&self, day_index: u64) -> NaiveDate {
        day_to_date(self.start_date, day_index)
    }
}

pub fn day_to_date(start: NaiveDate, day_index: u64) -> NaiveDate {
    start + chrono::Days::new(day_index)
}

/// Whole days from `start` to `date`; negative if `date` is earlier.
pub fn day_index_of(start: NaiveDate, date: NaiveDate) -> i64 {
    (date - start).num_days()
}

fn check_monotone(
    line: u64,
    prev: &Observation,
    cur: &Observation,
) -> Result<(), ObservationError> {
    for (column, p, c) in [
        ("recovered_cum", prev.r_cum, cur.r_cum),
        ("deaths_cum", prev.d_cum, cur.d_cum),
    ] {
        if c < p {
            return Err(ObservationError::Decreasing {
                line,
                column,
                previous: p,
                value: c,
            });
        }
    }
    Ok(())
}

pub fn load_observations(
    path: &Path,
    opts: &LoadOptions,
) -> Result<ObservationSeries, ObservationError> {
    let file = File::open(path).map_err(|source| ObservationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_observations(file, opts)
}

pub fn read_observations<R: Read>(
    reader: R,
    opts: &LoadOptions,
) -> Result<ObservationSeries, ObservationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let csv_err = |e: csv::Error| ObservationError::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(1),
        message: e.to_string(),
    };

    let header = rdr.headers().map_err(csv_err)?.clone();
    let mut index = [0usize; 4];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or(ObservationError::MissingColumn(name))?;
    }
    let extra: Vec<String> = header
        .iter()
        .filter(|h| !COLUMNS.contains(h))
        .map(str::to_owned)
        .collect();
    if !extra.is_empty() && !opts.lax_columns {
        return Err(ObservationError::ExtraColumns(extra));
    }

    let start = opts.sim_start_date;
    let mut records: Vec<Observation> = Vec::new();
    let mut prev_date: Option<NaiveDate> = None;
    for result in rdr.records() {
        let row = result.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(index[i]).unwrap_or("");

        let raw_date = field(0);
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| {
            ObservationError::BadDate {
                line,
                value: raw_date.to_owned(),
            }
        })?;
        let count = |i: usize| -> Result<u64, ObservationError> {
            let column = COLUMNS[i];
            let raw = field(i);
            let v: i64 = raw.parse().map_err(|_| ObservationError::BadValue {
                line,
                column,
                value: raw.to_owned(),
            })?;
            u64::try_from(v).map_err(|_| ObservationError::Negative {
                line,
                column,
                value: v,
            })
        };
        let (h_stock, r_cum, d_cum) = (count(1)?, count(2)?, count(3)?);

        if let Some(prev) = prev_date {
            let expected = prev + chrono::Days::new(1);
            if date != expected {
                return Err(ObservationError::Gap {
                    line,
                    expected,
                    found: date,
                });
            }
        }
        let offset = day_index_of(start, date);
        if offset < 0 {
            return Err(ObservationError::BeforeStart { line, date, start });
        }
        let obs = Observation {
            day_index: offset as u64,
            h_stock,
            r_cum,
            d_cum,
        };
        if let Some(prev) = records.last() {
            check_monotone(line, prev, &obs)?;
        }
        if records.is_empty() {
            if let Some(expected) = opts.first_obs_day_index {
                if obs.day_index != expected {
                    return Err(ObservationError::Misaligned {
                        date,
                        expected,
                        found: obs.day_index,
                    });
                }
            }
        }
        records.push(obs);
        prev_date = Some(date);
    }
    Ok(ObservationSeries {
        start_date: start,
        records,
    })
}

/// Write a series in the input schema; reloading it yields the same series.
pub fn write_observations<W: Write>(series: &ObservationSeries, writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(COLUMNS)?;
    for o in &series.records {
        wtr.write_record([
            series.date_of(o.day_index).format(DATE_FORMAT).to_string(),
            o.h_stock.to_string(),
            o.r_cum.to_string(),
            o.d_cum.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

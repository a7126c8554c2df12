//! CSV and metadata output.
//!
//! `summaries.csv` has one row per day and phase with the columns
//!
//! ```text
//! day_index,date,phase,
//! rt_mean,rt_lo68,rt_hi68,rt_lo90,rt_hi90,
//! r_..., h_..., r_cum_..., d_cum_..., asym_..., p_hd_..., mean_t_h_...,
//! n_eff,resampled
//! ```
//!
//! (interval columns follow the configured coverage levels). Floats are
//! written with 17 significant digits so identical runs produce identical
//! bytes.

use std::io::{self, Write};

use chrono::NaiveDate;

use crate::experiment::{DailySummary, Phase, Quantity};
use crate::observations::{day_to_date, DATE_FORMAT};

/// Round-trip formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn level_tag(level: f64) -> String {
    let pct = (level * 100.0 * 1e6).round() / 1e6;
    format!("{pct}")
}

pub fn summary_header(levels: &[f64]) -> Vec<String> {
    let mut cols = vec![
        "day_index".to_owned(),
        "date".to_owned(),
        "phase".to_owned(),
    ];
    for q in Quantity::ALL {
        cols.push(format!("{}_mean", q.name()));
        for &l in levels {
            let tag = level_tag(l);
            cols.push(format!("{}_lo{tag}", q.name()));
            cols.push(format!("{}_hi{tag}", q.name()));
        }
    }
    cols.push("n_eff".to_owned());
    cols.push("resampled".to_owned());
    cols
}

pub fn write_summaries<W: Write>(
    mut out: W,
    summaries: &[DailySummary],
    levels: &[f64],
    start: NaiveDate,
) -> io::Result<()> {
    writeln!(out, "{}", summary_header(levels).join(","))?;
    for s in summaries {
        let mut row = vec![
            s.day_index.to_string(),
            day_to_date(start, s.day_index)
                .format(DATE_FORMAT)
                .to_string(),
            s.phase.name().to_owned(),
        ];
        for q in Quantity::ALL {
            let summary = s.get(q);
            row.push(fmt_f64(summary.mean));
            for &l in levels {
                let (lo, hi) = summary
                    .interval(l)
                    .map(|i| (i.lo, i.hi))
                    .unwrap_or((f64::NAN, f64::NAN));
                row.push(fmt_f64(lo));
                row.push(fmt_f64(hi));
            }
        }
        row.push(fmt_f64(s.n_eff));
        row.push(s.resampled.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

pub fn write_divergence<W: Write>(
    mut out: W,
    divergence: &[(u64, f64)],
    start: NaiveDate,
) -> io::Result<()> {
    writeln!(out, "day_index,date,relative_difference_h")?;
    for &(day, d) in divergence {
        writeln!(
            out,
            "{day},{},{}",
            day_to_date(start, day).format(DATE_FORMAT),
            fmt_f64(d)
        )?;
    }
    out.flush()
}

/// Flat `key = value` run metadata: the resolved configuration followed by
/// a few run statistics.
pub fn write_meta<W: Write>(
    mut out: W,
    settings: &[(&'static str, String)],
    summaries: &[DailySummary],
) -> io::Result<()> {
    for (k, v) in settings {
        writeln!(out, "{k} = {v}")?;
    }
    let assimilated = summaries
        .iter()
        .filter(|s| s.phase == Phase::Analysis)
        .count();
    let free = summaries.iter().filter(|s| s.phase == Phase::Free).count();
    let resamplings = summaries.iter().filter(|s| s.resampled).count();
    let min_n_eff = summaries
        .iter()
        .filter(|s| s.phase == Phase::Analysis)
        .map(|s| s.n_eff)
        .fold(f64::INFINITY, f64::min);
    writeln!(out, "result.free_run_days = {free}")?;
    writeln!(out, "result.assimilated_days = {assimilated}")?;
    writeln!(out, "result.resamplings = {resamplings}")?;
    if assimilated > 0 {
        writeln!(out, "result.min_n_eff = {}", fmt_f64(min_n_eff))?;
    }
    if let Some(last) = summaries.iter().rev().find(|s| s.phase != Phase::Forecast) {
        writeln!(out, "result.last_day = {}", last.day_index)?;
        writeln!(
            out,
            "result.last_rt_mean = {}",
            fmt_f64(last.get(Quantity::Rt).mean)
        )?;
    }
    out.flush()
}

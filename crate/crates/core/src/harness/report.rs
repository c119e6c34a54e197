//! CSV tables, JSON summaries and the optional gnuplot script.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::study::{ConcentrationReport, DistanceRow, EffectiveDimensionRow, RateReport};

const FOOTER: &str = "slopes are compared with the theoretical exponents; multiplicative constants are not verified";

#[derive(Serialize)]
struct RateCsvRow {
    m: usize,
    lambda_star: f64,
    #[serde(rename = "err_H_median")]
    err_h_median: f64,
    #[serde(rename = "err_H_q")]
    err_h_q: f64,
    err_pred_median: f64,
    #[serde(rename = "err_L_median")]
    err_l_median: f64,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Serializes `rows` to CSV bytes with a header line.
pub fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn rate_csv(report: &RateReport) -> Result<Vec<u8>> {
    to_csv(report.rows.iter().map(|r| RateCsvRow {
        m: r.m,
        lambda_star: r.lambda_star,
        err_h_median: r.err_h_median,
        err_h_q: r.err_h_q,
        err_pred_median: r.err_pred_median,
        err_l_median: r.err_l_median,
    }))
}

pub fn rate_summary(report: &RateReport) -> serde_json::Value {
    let fit = report.fit;
    json!({
        "verdict": report.verdict(),
        "fitted_slope": fit.map(|f| f.slope),
        "slope_se": fit.and_then(|f| f.slope_se.is_finite().then_some(f.slope_se)),
        "theoretical_exponent": report.theoretical_slope,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "slope_tol": report.slope_tol,
        "low_confidence": fit.is_none_or(|f| f.low_confidence),
        "regime": report.regime,
        "valid": report.valid,
        "nonconverged_fraction": report.nonconverged_fraction,
        "all_admissible": report.all_admissible,
        "monotone_fraction": report.monotone_fraction(),
        "rows": report.rows.iter().map(|r| json!({
            "m": r.m,
            "lambda_star": r.lambda_star,
            "clamped": r.clamped,
            "admissible": r.admissible,
            "radius": r.radius,
            "err_pred_q": r.err_pred_q,
            "err_L_q": r.err_l_q,
            "converged": r.converged,
            "in_domain": r.in_domain,
            "interpolation_ok": r.interpolation_ok,
        })).collect::<Vec<_>>(),
        "note": FOOTER,
    })
}

pub fn concentration_csv(report: &ConcentrationReport) -> Result<Vec<u8>> {
    to_csv(&report.rows)
}

pub fn concentration_summary(report: &ConcentrationReport) -> serde_json::Value {
    json!({
        "verdict": if report.passes() { "pass" } else { "fail" },
        "trials": report.trials,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "skipped": report.skipped,
    })
}

pub fn effective_dimension_csv(rows: &[EffectiveDimensionRow]) -> Result<Vec<u8>> {
    to_csv(rows)
}

pub fn distance_csv(rows: &[DistanceRow]) -> Result<Vec<u8>> {
    to_csv(rows)
}

/// Gnuplot script plotting the median errors of `csv_name` on log axes.
pub fn gnuplot_stub(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set key autotitle columnhead\n\
         set xlabel 'm'\n\
         set ylabel 'error'\n\
         plot '{csv_name}' using 1:3 with linespoints, \\\n\
         \x20    '' using 1:5 with linespoints, \\\n\
         \x20    '' using 1:6 with linespoints\n"
    )
}

/// Writes `bytes` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

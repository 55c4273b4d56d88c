//! Simulation report rows and their CSV/JSON serialization.

use super::SimScenario;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One method × coefficient × scenario summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub scenario_id: String,
    pub family: String,
    pub error_type: String,
    pub quality: String,
    pub n: usize,
    pub n_lab: usize,
    pub method: String,
    pub coef: usize,
    pub pct_bias: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub re: f64,
    #[serde(skip)]
    pub re_mcse: f64,
    pub ase: f64,
    pub ese: f64,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub scenario: SimScenario,
    pub beta_star: Vec<f64>,
    pub replicates_used: usize,
    pub n_failures: usize,
    pub rows: Vec<SimRow>,
}

impl SimReport {
    pub fn row(&self, method: &str, coef: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.method == method && r.coef == coef)
    }

    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a SimRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// One-line summary: coverage range and relative-efficiency range.
    pub fn summary_line(&self) -> String {
        let fold = |f: fn(&SimRow) -> f64| {
            self.rows.iter().map(f).filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let (cmin, cmax) = fold(|r| r.coverage);
        let (rmin, rmax) = fold(|r| r.re);
        format!(
            "{}: coverage [{cmin:.3}, {cmax:.3}], RE [{rmin:.3}, {rmax:.3}], failures {}/{}",
            self.scenario.id(),
            self.n_failures,
            self.scenario.replicates
        )
    }
}

/// Rounds to `digits` significant digits.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", digits.saturating_sub(1), v).parse().unwrap_or(v)
}

fn rounded(row: &SimRow) -> SimRow {
    let r = |v: f64| round_sig(v, 10);
    SimRow {
        pct_bias: r(row.pct_bias),
        coverage: r(row.coverage),
        coverage_mcse: r(row.coverage_mcse),
        re: r(row.re),
        re_mcse: r(row.re_mcse),
        ase: r(row.ase),
        ese: r(row.ese),
        ..row.clone()
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("writing report: {e}"))
}

/// Writes all rows of all reports as CSV with a header line.
pub fn write_csv<W: Write>(reports: &[SimReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for report in reports {
        for row in &report.rows {
            w.serialize(rounded(row)).map_err(io_err)?;
        }
    }
    if reports.iter().all(|r| r.rows.is_empty()) {
        w.write_record([
            "scenario_id", "family", "error_type", "quality", "n", "n_lab", "method", "coef", "pct_bias",
            "coverage", "coverage_mcse", "re", "ase", "ese", "n_failures",
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[derive(Serialize)]
struct JsonDoc {
    rows: Vec<SimRow>,
}

/// Writes all rows as a JSON document `{"rows": [...]}` with the CSV columns as keys.
pub fn write_json<W: Write>(reports: &[SimReport], mut out: W) -> Result<()> {
    let doc = JsonDoc { rows: reports.iter().flat_map(|r| r.rows.iter().map(rounded)).collect() };
    serde_json::to_writer_pretty(&mut out, &doc).map_err(io_err)?;
    writeln!(out).map_err(io_err)
}

//! Report document (JSON) and flat tables (CSV).
//!
//! JSON floats use the shortest representation that round-trips; table
//! floats carry 17 significant digits. NaN becomes `null` in JSON and
//! `NaN` in tables.

use std::io::Write;

use crate::bounds::RelationReport;
use crate::error::{Error, Result};

/// Diagnostics copied into their own table columns.
pub const DIAGNOSTIC_COLUMNS: [&str; 14] = [
    "corr_rho",
    "corr_phi",
    "corr_avg",
    "corr_used",
    "s_f",
    "kappa",
    "rhs_continuum",
    "ideal_lhs",
    "lhs_first",
    "lhs_second",
    "leakage_max",
    "dropped_mass",
    "tail_mass_max",
    "tail_flags",
];

const REPORT_COLUMNS: [&str; 18] = [
    "id", "order", "alpha", "gamma", "beta", "family", "f_kind", "f_width", "g_kind", "g_width",
    "dzeta", "dxi", "lhs", "rhs", "margin", "pass", "tol", "status",
];

/// Full-precision table number.
pub fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

pub fn to_json(reports: &[RelationReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn report_row(r: &RelationReport) -> Vec<String> {
    let mut row = vec![
        r.id.name().to_string(),
        r.order.name().to_string(),
        optional(r.alpha),
        optional(r.gamma),
        number(r.beta),
        r.cell.family.clone(),
        r.cell.f_kind.clone(),
        number(r.cell.f_width),
        r.cell.g_kind.clone(),
        number(r.cell.g_width),
        number(r.cell.dzeta),
        number(r.cell.dxi),
        number(r.lhs),
        number(r.rhs),
        number(r.margin),
        r.pass.to_string(),
        number(r.tol),
        r.status.clone(),
    ];
    row.extend(DIAGNOSTIC_COLUMNS.iter().map(|k| optional(r.diagnostic(k))));
    row
}

pub fn write_csv<W: Write>(out: W, reports: &[RelationReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS.iter().chain(DIAGNOSTIC_COLUMNS.iter()))
        .map_err(io)?;
    for r in reports {
        w.write_record(report_row(r)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn to_csv(reports: &[RelationReport]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, reports).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

/// Axis a sweep table is keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Beta,
    ProfileWidth,
    BinWidth,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::ProfileWidth => "profile_width",
            SweepAxis::BinWidth => "bin_width",
        }
    }

    /// Axis value of a report: beta, the momentum profile width, or the
    /// momentum bin width.
    pub fn value(&self, r: &RelationReport) -> f64 {
        match self {
            SweepAxis::Beta => r.beta,
            SweepAxis::ProfileWidth => r.cell.f_width,
            SweepAxis::BinWidth => r.cell.dzeta,
        }
    }
}

const SWEEP_COLUMNS: [&str; 19] = [
    "axis_value", "id", "order", "alpha", "gamma", "family", "f_width", "g_width", "beta",
    "dzeta", "dxi", "lhs", "rhs", "margin", "pass", "status", "s_f", "kappa", "rhs_continuum",
];

/// Plot-ready table, one row per report.
pub fn sweep_csv(axis: SweepAxis, reports: &[RelationReport]) -> String {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(SWEEP_COLUMNS).expect("in-memory write");
        for r in reports {
            w.write_record([
                number(axis.value(r)),
                r.id.name().to_string(),
                r.order.name().to_string(),
                optional(r.alpha),
                optional(r.gamma),
                r.cell.family.clone(),
                number(r.cell.f_width),
                number(r.cell.g_width),
                number(r.beta),
                number(r.cell.dzeta),
                number(r.cell.dxi),
                number(r.lhs),
                number(r.rhs),
                number(r.margin),
                r.pass.to_string(),
                r.status.clone(),
                optional(r.diagnostic("s_f")),
                optional(r.diagnostic("kappa")),
                optional(r.diagnostic("rhs_continuum")),
            ])
            .expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    String::from_utf8(buf).expect("utf-8")
}

/// Whitespace-separated numeric columns with a `#` header line.
pub fn columns(header: &[&str], cols: &[&[f64]]) -> String {
    let mut s = format!("# {}\n", header.join(" "));
    let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..n {
        let row: Vec<String> = cols.iter().map(|c| number(c[i])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

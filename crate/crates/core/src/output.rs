//! CSV export of moment series and the JSON run summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certificates::{CertificateReport, ExponentSet, VerdictRow};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::observables::MomentSeries;

pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");
pub const SUMMARY_FORMAT: &str = "semiclassical-summary";
pub const SUMMARY_VERSION: u32 = 1;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Series as CSV without the timestamp line; deterministic for fixed input.
pub fn series_csv_body(series: &MomentSeries, ledger_hash: &str) -> String {
    let m = &series.meta;
    let d = m.d;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# scenario={} kind={} hbar={} d={} ledger={} horizon_breached={}",
        m.scenario,
        m.kind,
        num(m.hbar),
        d,
        ledger_hash,
        series.horizon_breached
    );
    let mut cols = vec!["t [time]".to_string(), "mass [mass]".to_string(), "energy [energy]".to_string()];
    for n in &series.orders {
        cols.push(format!("L_{n} [mass*length^{n}]"));
        cols.push(format!("M_{n} [mass*momentum^{n}]"));
        cols.push(format!("N_{n} [mass*length^{n}]"));
    }
    for p in &series.lp_exponents {
        cols.push(format!("lp_{p} [mass*length^-{:.6}]", d as f64 * (1.0 - 1.0 / p)));
    }
    cols.push("rho_max [mass*length^-d]".into());
    cols.push("boundary_mass [1]".into());
    out.push_str(&cols.join(","));
    out.push('\n');
    for r in &series.records {
        let mut row = vec![num(r.t), num(r.mass), num(r.energy)];
        for k in 0..series.orders.len() {
            row.push(num(r.l[k]));
            row.push(num(r.m[k]));
            row.push(num(r.n[k]));
        }
        row.extend(r.lp.iter().map(|v| num(*v)));
        row.push(num(r.rho_max));
        row.push(num(r.boundary_mass));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    if series.horizon_breached {
        let t = series.records.last().map_or(0.0, |r| r.t);
        let _ = writeln!(out, "# truncated: validity horizon reached after t={}", num(t));
    }
    out
}

pub fn write_series_csv(series: &MomentSeries, ledger_hash: &str, path: &Path) -> Result<()> {
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let text = format!("# generated {stamp}\n{}", series_csv_body(series, ledger_hash));
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub kind: String,
    pub csv: String,
    pub records: usize,
    pub final_time: f64,
    pub horizon_breached: bool,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub verdicts: Vec<VerdictRow>,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSample {
    pub t: f64,
    pub epsilon: f64,
    pub w2_squared: f64,
    pub envelope: f64,
    /// `envelope^2 + d hbar`.
    pub bound: f64,
    pub window_lower: f64,
    pub marginal_error: f64,
    pub converged: bool,
    /// Particle mass deposited outside the phase grid.
    pub deposition_loss: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSection {
    pub lambda: f64,
    pub w0_squared: f64,
    /// Entropic regularization in units of the squared phase-grid spacing.
    pub epsilon_cells: f64,
    pub samples: Vec<TransportSample>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    pub hbar: f64,
    pub d: usize,
    pub kernel: KernelSpec,
    pub exponents: Option<ExponentSet>,
    pub ledger_hash: Option<String>,
    pub certificate: Option<CertificateReport>,
    pub certificate_note: Option<String>,
    pub runs: Vec<RunSection>,
    pub transport: Option<TransportSection>,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn new(command: &str, scenario: &str, seed: u64, hbar: f64, d: usize, kernel: KernelSpec) -> Self {
        Summary {
            format: SUMMARY_FORMAT.into(),
            version: SUMMARY_VERSION,
            command: command.into(),
            scenario: scenario.into(),
            seed,
            hbar,
            d,
            kernel,
            exponents: None,
            ledger_hash: None,
            certificate: None,
            certificate_note: None,
            runs: Vec::new(),
            transport: None,
            checks: Vec::new(),
        }
    }
}

/// Checks a summary document against the shipped schema.
pub fn validate_summary(doc: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(SUMMARY_SCHEMA)?;
    let validator = jsonschema::validator_for(&schema)
        .map_err(|e| Error::invalid("schema", format!("shipped schema is invalid: {e}")))?;
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{}: {e}", e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid("summary", errors.join("; ")))
    }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let doc = serde_json::to_value(summary)?;
    validate_summary(&doc)?;
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

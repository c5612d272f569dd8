//! CSV rows and the plain-text run report.

use std::fmt::Write as _;
use std::io::Write;

use ruinlab_core::estimators::EstimateReport;
use serde::{Deserialize, Serialize};

use crate::AppError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One output row per `(u, λ, method)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub u: f64,
    pub lambda: f64,
    pub method: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub reps: u64,
    pub seed: Option<u64>,
    /// Wall time of the estimator call that produced the row (empty when timing is off).
    pub wall_ms: Option<f64>,
}

impl Row {
    pub fn from_report(r: &EstimateReport, wall_ms: Option<f64>) -> Self {
        Self {
            u: r.u,
            lambda: r.lambda,
            method: r.method.tag().to_string(),
            estimate: r.estimate,
            std_error: r.std_error,
            ci_lo: r.ci95.0,
            ci_hi: r.ci95.1,
            reps: r.replications,
            seed: r.seed,
            wall_ms,
        }
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<(), AppError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| AppError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::Io(e.to_string()))
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<Row>, AppError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::Io(e.to_string()))
}

/// Key-value report: version, seed, solved rates, hypothesis checks and notes.
pub fn report_text(name: &str, seed: u64, replications: u64, reports: &[EstimateReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ruinlab_version = {VERSION}");
    let _ = writeln!(s, "config = {name}");
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "replications = {replications}");
    for r in reports {
        let _ = writeln!(s);
        let _ = writeln!(s, "[{} lambda={} u={}]", r.method.tag(), r.lambda, r.u);
        let _ = writeln!(s, "estimate = {:.6e}", r.estimate);
        let _ = writeln!(s, "std_error = {:.3e}", r.std_error);
        let _ = writeln!(s, "ci95 = [{:.6e}, {:.6e}]", r.ci95.0, r.ci95.1);
        if r.replications > 0 {
            let _ = writeln!(s, "replications = {}", r.replications);
        }
        if let Some(seed) = r.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        if let Some(rate) = &r.rate {
            let _ = writeln!(s, "rho = {:.12}", rate.rate);
            let _ = writeln!(s, "mu = {:.12}", rate.mu);
            let _ = writeln!(s, "domain_bound = {}", rate.domain_bound);
        }
        if let Some(h) = &r.horizon {
            let _ = writeln!(s, "horizon.max_years = {}", h.max_years);
            let _ = writeln!(s, "horizon.mean_years = {:.3}", h.mean_years);
            let _ = writeln!(s, "horizon.exact = {}", h.exact);
        }
        if let Some(b) = r.truncation_bias {
            let _ = writeln!(s, "truncation_bias = {b:.3e}");
        }
        if r.clamped > 0 {
            let _ = writeln!(s, "clamped = {}", r.clamped);
        }
        if let Some(t) = &r.ruin_time {
            let _ = writeln!(
                s,
                "ruin_time = {} ruins, mean year {:.3}, mean T/log u {:.4} ± {:.4}",
                t.ruins, t.mean_year, t.mean_scaled, t.std_error_scaled
            );
        }
        for h in &r.hypotheses {
            let _ = writeln!(
                s,
                "check.{} = {} ({})",
                h.name,
                if h.passed { "pass" } else { "FAIL" },
                h.detail
            );
        }
        for n in &r.notes {
            let _ = writeln!(s, "note = {n}");
        }
    }
    s
}

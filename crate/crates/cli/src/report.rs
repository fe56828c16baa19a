//! Pass/fail reporting for invariant and experiment suites: named checks
//! with measured values and bounds, rendered as a machine-readable CSV.

use crate::io::CSV_VERSION_HEADER;
use std::fmt::Write as _;

/// One named check with its measured value and the bound it was held to.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub bound: String,
    pub passed: bool,
}

impl CheckResult {
    /// `measured <= tolerance` (and finite).
    pub fn upper(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound: format!("<={tolerance}"),
            passed: measured.is_finite() && measured <= tolerance,
        }
    }

    /// `lo <= measured <= hi` (and finite).
    pub fn interval(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound: format!("[{lo},{hi}]"),
            passed: measured.is_finite() && measured >= lo && measured <= hi,
        }
    }
}

/// An ordered collection of check results.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// CSV rendering: `check,measured,bound,status` under the version
    /// header. Bounds may contain commas, so they are the last free-form
    /// columns quoted wholesale.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_VERSION_HEADER);
        out.push('\n');
        out.push_str("check,measured,bound,status\n");
        for check in &self.checks {
            let _ = writeln!(
                out,
                "{},{},\"{}\",{}",
                check.name,
                check.measured,
                check.bound,
                if check.passed { "pass" } else { "fail" }
            );
        }
        out
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fd::FdSettings;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped(String),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped(_) => "SKIP",
        }
    }
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail)
    }
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// How the numerical oracle behind a report was configured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub fd_step: f64,
    pub fd_order: u8,
    pub jets: String,
}

impl OracleMeta {
    pub fn fd(fd: &FdSettings, jets: &str) -> Self {
        OracleMeta { fd_step: fd.step, fd_order: fd.order, jets: jets.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub check_id: String,
    pub example: String,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual_abs: f64,
    pub residual_rel: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub oracle: OracleMeta,
    /// Named auxiliary values (secondary residuals, oracle intermediates).
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IdentityReport {
    pub fn new(
        check_id: &str,
        point: Vec<f64>,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        verdict: Verdict,
        oracle: OracleMeta,
    ) -> Self {
        let residual_abs = (lhs - rhs).abs();
        IdentityReport {
            check_id: check_id.to_string(),
            example: String::new(),
            point,
            lhs,
            rhs,
            residual_abs,
            residual_rel: residual_abs / (lhs.abs() + rhs.abs() + 1.0),
            tolerance,
            verdict,
            oracle,
            details: BTreeMap::new(),
            note: None,
        }
    }

    /// Report whose verdict is decided by `max(|lhs − rhs|, secondary) ≤ tolerance`.
    pub fn judged(
        check_id: &str,
        point: Vec<f64>,
        lhs: f64,
        rhs: f64,
        secondary: f64,
        tolerance: f64,
        oracle: OracleMeta,
    ) -> Self {
        let primary = (lhs - rhs).abs();
        let ok = primary.is_finite() && secondary.is_finite() && primary.max(secondary) <= tolerance;
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        let mut r = IdentityReport::new(check_id, point, lhs, rhs, tolerance, verdict, oracle);
        if secondary > 0.0 || secondary.is_nan() {
            r.details.insert("secondary_residual".into(), secondary);
        }
        r
    }

    pub fn skipped(check_id: &str, point: Vec<f64>, tolerance: f64, reason: impl Into<String>, oracle: OracleMeta) -> Self {
        let mut r = IdentityReport::new(check_id, point, 0.0, 0.0, tolerance, Verdict::Pass, oracle);
        r.verdict = Verdict::Skipped(reason.into());
        r
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn with_example(mut self, example: &str) -> Self {
        self.example = example.to_string();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_residual_is_normalized() {
        let r = IdentityReport::new("x", vec![], 3.0, 1.0, 1e-3, Verdict::Fail, OracleMeta::fd(&FdSettings::default(), "analytic"));
        assert_eq!(r.residual_abs, 2.0);
        assert_eq!(r.residual_rel, 2.0 / 5.0);
    }

    #[test]
    fn judged_uses_secondary_residual() {
        let o = OracleMeta::fd(&FdSettings::default(), "analytic");
        assert!(IdentityReport::judged("x", vec![], 1.0, 1.0, 0.0, 1e-9, o.clone()).verdict.is_pass());
        assert!(IdentityReport::judged("x", vec![], 1.0, 1.0, 1e-3, 1e-9, o.clone()).verdict.is_fail());
        assert!(IdentityReport::judged("x", vec![], f64::NAN, 1.0, 0.0, 1e-9, o).verdict.is_fail());
    }
}

//! The universal output record: a point estimate with optional uncertainty
//! and convergence diagnostics, serialized as JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    pub iterations: u64,
    pub converged: bool,
    pub loglik: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EstimateReport {
    pub method: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub level: Option<f64>,
    pub diagnostics: Diagnostics,
    /// Numeric inputs echoed for provenance (filled by the CLI; empty and
    /// omitted when the report is produced directly from library calls).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(method: impl Into<String>, estimate: f64) -> Self {
        EstimateReport {
            method: method.into(),
            estimate,
            se: None,
            ci: None,
            level: None,
            diagnostics: Diagnostics {
                iterations: 0,
                converged: true,
                loglik: None,
                warnings: Vec::new(),
            },
            params: BTreeMap::new(),
        }
    }

    pub fn with_interval(mut self, se: f64, ci: [f64; 2], level: f64) -> Self {
        self.se = Some(se);
        self.ci = Some(ci);
        self.level = Some(level);
        self
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.diagnostics.warnings.push(msg.into());
    }

    /// Serialize to the JSON wire format. Rejects non-finite numerics, which
    /// would otherwise silently become invalid JSON.
    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string(self)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EstimateReport = serde_json::from_str(text)?;
        Ok(report)
    }

    fn validate(&self) -> Result<()> {
        let mut ok = self.estimate.is_finite();
        if let Some(se) = self.se {
            ok &= se.is_finite() && se >= 0.0;
        }
        if let (Some([lo, hi]), Some(level)) = (self.ci, self.level) {
            ok &= lo.is_finite() && hi.is_finite();
            ok &= lo <= self.estimate && self.estimate <= hi;
            ok &= 0.0 < level && level < 1.0;
        }
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "report for method {:?} has non-finite or inconsistent numerics",
                self.method
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut report = EstimateReport::new("species.chao", 110.0).with_interval(
            3.5,
            [103.14, 116.86],
            0.95,
        );
        report.diagnostics.iterations = 12;
        report.diagnostics.loglik = Some(-1234.5);
        report.warn("example");
        report.params.insert("seed".into(), 42.0);

        let json = report.to_json().unwrap();
        let back = EstimateReport::from_json(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn absent_fields_serialize_as_null() {
        let report = EstimateReport::new("eb.uv", 2.0);
        let json = report.to_json().unwrap();
        assert!(json.contains("\"se\":null"));
        assert!(json.contains("\"ci\":null"));
        assert!(!json.contains("params"));
    }

    #[test]
    fn invalid_interval_is_rejected() {
        let report = EstimateReport::new("x", 1.0).with_interval(1.0, [2.0, 3.0], 0.95);
        assert!(report.to_json().is_err());
        let report = EstimateReport::new("x", f64::NAN);
        assert!(report.to_json().is_err());
    }
}

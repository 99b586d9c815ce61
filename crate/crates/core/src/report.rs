use serde::{Deserialize, Serialize};

use crate::serde_ext;

/// One named invariant check. `margin` is positive exactly when the check
/// holds with room to spare; zero-margin checks (exact comparisons) carry 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "serde_ext::float")]
    pub margin: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub overall_pass: bool,
    /// Caveats attached to every report, e.g. that sup bounds are sampled.
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new() -> Self {
        Self {
            checks: Vec::new(),
            overall_pass: true,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, margin: f64, passed: bool, detail: impl Into<String>) {
        self.overall_pass &= passed;
        self.checks.push(Check {
            name: name.into(),
            margin,
            passed,
            detail: detail.into(),
        });
    }

    /// Check that passes iff `margin > 0`.
    pub fn push_margin(&mut self, name: impl Into<String>, margin: f64, detail: impl Into<String>) {
        self.push(name, margin, margin > 0.0, detail);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use backforth_core::birkhoff::{ArtifactSettings, TargetCycle, UniversalSettings, DEFAULT_JMAX};
use backforth_core::densesets::SetKind;
use backforth_core::engine::{EngineOptions, OddFactor};
use backforth_core::franklin::{BudgetSchedule, VerifySettings};
use backforth_core::numkernel::RealPoly;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Theorem1,
    Theorem2,
    VerifyOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub base: f64,
    pub ratio: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { base: 0.25, ratio: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points of the derivative check on the window.
    pub verify: usize,
    /// Rows of the exported sample file.
    pub samples: usize,
    pub growth_samples: usize,
    pub growth_radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            verify: 10_000,
            samples: 1001,
            growth_samples: 1000,
            growth_radius: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChapletConfig {
    pub k: usize,
    #[serde(default = "default_jmax")]
    pub jmax: usize,
}

fn default_jmax() -> usize {
    DEFAULT_JMAX
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preferences {
    pub exact_hits: bool,
    pub odd_factor: OddFactor,
}

impl Default for Preferences {
    fn default() -> Self {
        Self {
            exact_hits: true,
            odd_factor: OddFactor::Modulator,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub trace: String,
    pub samples: String,
    pub report: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            trace: "trace.jsonl".into(),
            samples: "samples.csv".into(),
            report: "report.json".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub a: SetKind,
    pub b: SetKind,
    #[serde(default)]
    pub budget: BudgetConfig,
    pub steps: usize,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub chaplet: Option<ChapletConfig>,
    /// Ascending coefficient lists of the target polynomials.
    #[serde(default)]
    pub cycle: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub preferences: Preferences,
    #[serde(default)]
    pub outputs: Outputs,
    /// Accepted for compatibility; nothing in a run is random.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_window() -> f64 {
    5.0
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Schema(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.budget.ratio > 0.0 && self.budget.ratio < 1.0) {
            return bad("budget ratio must lie in (0, 1)");
        }
        if !(self.budget.base > 0.0) {
            return bad("budget base must be positive");
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return bad("window must be positive");
        }
        let g = &self.grids;
        if g.verify < 2 || g.samples < 2 || g.growth_samples == 0 || !(g.growth_radius > 0.0) {
            return bad("grid sizes must be positive (at least 2 grid points)");
        }
        if self.mode == Mode::Theorem2 {
            match (&self.chaplet, &self.cycle) {
                (Some(c), Some(cy)) if c.k > 0 && c.jmax > 0 && !cy.is_empty() => {}
                _ => return bad("theorem2 needs a chaplet with k > 0 and a nonempty cycle"),
            }
        }
        Ok(())
    }

    /// Rejects options that would make a run depend on anything but the file.
    pub fn check_seedless(&self) -> CliResult<()> {
        match self.seed {
            Some(_) => Err(CliError::Schema("seed given under --seedless".into())),
            None => Ok(()),
        }
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn budgets(&self) -> BudgetSchedule {
        BudgetSchedule {
            base: self.budget.base,
            ratio: self.budget.ratio,
        }
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            prefer_exact_hits: self.preferences.exact_hits,
            odd_factor: self.preferences.odd_factor,
            ..EngineOptions::default()
        }
    }

    pub fn verify_settings(&self) -> VerifySettings {
        VerifySettings {
            window: self.window,
            grid: self.grids.verify,
            growth_samples: self.grids.growth_samples,
            growth_radius: self.grids.growth_radius,
        }
    }

    pub fn universal_settings(&self) -> UniversalSettings {
        UniversalSettings {
            window: self.window,
            grid: self.grids.verify,
            ..UniversalSettings::default()
        }
    }

    pub fn artifact_settings(&self) -> ArtifactSettings {
        ArtifactSettings {
            budget_base: self.budget.base,
            budget_ratio: self.budget.ratio,
            ..ArtifactSettings::default()
        }
    }

    pub fn target_cycle(&self) -> CliResult<TargetCycle> {
        let lists = self
            .cycle
            .as_ref()
            .ok_or_else(|| CliError::Schema("missing target cycle".into()))?;
        Ok(TargetCycle::new(lists.iter().map(|c| RealPoly::new(c.clone())).collect())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"mode": "theorem1", "a": {"kind": "dyadic"}, "b": {"kind": "dyadic"}, "steps": 4}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.budget, BudgetConfig::default());
        assert_eq!(c.outputs.trace, "trace.jsonl");
        assert_eq!(c.hash().len(), 64);
        assert_eq!(c.hash(), RunConfig::from_json(MINIMAL).unwrap().hash());
    }

    #[test]
    fn schema_rules() {
        assert!(RunConfig::from_json(&MINIMAL.replace("4}", "0}")).is_err());
        assert!(RunConfig::from_json(&MINIMAL.replace("theorem1", "theorem2")).is_err());
        assert!(RunConfig::from_json(&MINIMAL.replace("\"steps\"", "\"unknown\": 1, \"steps\"")).is_err());
        let ratio = MINIMAL.replace("\"steps\"", "\"budget\": {\"base\": 1, \"ratio\": 1.5}, \"steps\"");
        assert!(matches!(RunConfig::from_json(&ratio), Err(CliError::Schema(_))));
    }

    #[test]
    fn seedless_rejects_seed() {
        let c = RunConfig::from_json(&MINIMAL.replace("\"steps\"", "\"seed\": 3, \"steps\"")).unwrap();
        assert!(c.check_seedless().is_err());
    }
}

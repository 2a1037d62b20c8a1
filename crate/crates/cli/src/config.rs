use std::path::{Path, PathBuf};

use invab_core::design::{sr_distribution, DesignKind, DesignSpec, RolloutShape};
use invab_core::experiment::DEFAULT_GTE_REPS;
use invab_core::preset::{build_preset, PresetId};
use invab_core::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    Preset(PresetId),
    Inline(Box<Scenario>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleModeName {
    Enumerate,
    Mc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default)]
    pub scenario: Option<ScenarioSource>,
    #[serde(default = "default_designs")]
    pub designs: Vec<DesignKind>,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Rollout shape for SR; the two-point shape around `H(1 - p)` if absent.
    #[serde(default)]
    pub sr_shape: Option<RolloutShape>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub crn: bool,
    #[serde(default = "default_gte_reps")]
    pub gte_reps: usize,
    #[serde(default = "default_mode")]
    pub mode: OracleModeName,
    /// Assignment samples per design in Monte Carlo oracle mode.
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_output")]
    pub output: OutputConfig,
}

fn default_designs() -> Vec<DesignKind> {
    DesignKind::ALL.to_vec()
}

fn default_p() -> f64 {
    0.5
}

fn default_reps() -> usize {
    250
}

fn default_true() -> bool {
    true
}

fn default_gte_reps() -> usize {
    DEFAULT_GTE_REPS
}

fn default_mode() -> OracleModeName {
    OracleModeName::Enumerate
}

fn default_mc_reps() -> usize {
    10_000
}

fn default_output() -> OutputConfig {
    OutputConfig {
        dir: PathBuf::from("results"),
        format: OutputFormat::Csv,
    }
}

impl Default for ConfigDocument {
    fn default() -> Self {
        Self {
            scenario: Some(ScenarioSource::Preset("fig2-stationary-tight".parse().expect("known preset"))),
            designs: default_designs(),
            p: default_p(),
            sr_shape: None,
            reps: default_reps(),
            seed: 0,
            crn: true,
            gte_reps: default_gte_reps(),
            mode: default_mode(),
            mc_reps: default_mc_reps(),
            threads: None,
            output: default_output(),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ConfigDocument {
    /// A document with every field at its default and no scenario.
    pub fn empty() -> Self {
        Self {
            scenario: None,
            ..Self::default()
        }
    }

    #[cfg(test)]
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let doc = Self::parse_unchecked(text, origin)?;
        doc.validate()?;
        Ok(doc)
    }

    fn parse_unchecked(text: &str, origin: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("{origin}: line {}, column {}: {e}", e.line(), e.column())))
    }

    /// Reads a document without range checks, so command-line flags can still fix it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse_unchecked(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if self.designs.is_empty() {
            return fail("designs: at least one design is required".into());
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail(format!("p: must lie strictly between 0 and 1, got {}", self.p));
        }
        if self.reps == 0 {
            return fail("reps: must be at least 1".into());
        }
        if self.gte_reps < 2 {
            return fail("gte_reps: must be at least 2".into());
        }
        if self.mc_reps < 2 {
            return fail("mc_reps: must be at least 2".into());
        }
        if self.threads == Some(0) {
            return fail("threads: must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The scenario and the id used to label its outputs.
    pub fn resolve_scenario(&self) -> Result<(String, Scenario), ConfigError> {
        match &self.scenario {
            None => Err(ConfigError(
                "scenario: missing; pass --preset or set `scenario` in the config".into(),
            )),
            Some(ScenarioSource::Preset(id)) => {
                let preset = build_preset(*id).map_err(|e| ConfigError(format!("scenario: {e}")))?;
                Ok((id.to_string(), preset.scenario))
            }
            Some(ScenarioSource::Inline(s)) => Ok(("inline".to_string(), (**s).clone())),
        }
    }

    pub fn design_specs(&self, horizon: usize) -> Result<Vec<DesignSpec>, ConfigError> {
        self.designs
            .iter()
            .map(|kind| {
                let spec = match (kind, self.sr_shape) {
                    (DesignKind::SR, Some(shape)) => sr_distribution(self.p, horizon, shape)
                        .map(|w| DesignSpec::staggered(self.p, w)),
                    _ => DesignSpec::standard(*kind, self.p, horizon),
                };
                spec.map_err(|e| ConfigError(format!("designs: {kind}: {e}")))
            })
            .collect()
    }
}

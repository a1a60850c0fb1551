//! Experiment configuration: a versioned TOML schema in which unknown keys
//! are hard errors, plus resolution of every default so the echoed config
//! fully describes the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Aq,
    Pso,
    Dsq,
    ReplayVerify,
    TheoryCheck,
}

impl Mode {
    pub fn parse(s: &str) -> CliResult<Mode> {
        match s {
            "aq" => Ok(Mode::Aq),
            "pso" => Ok(Mode::Pso),
            "dsq" => Ok(Mode::Dsq),
            "replay-verify" => Ok(Mode::ReplayVerify),
            "theory-check" => Ok(Mode::TheoryCheck),
            other => Err(CliError::validation(
                "mode",
                format!("unknown mode `{other}`"),
            )),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Aq => "aq",
            Mode::Pso => "pso",
            Mode::Dsq => "dsq",
            Mode::ReplayVerify => "replay-verify",
            Mode::TheoryCheck => "theory-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            mode: "hoeffding-tight".into(),
            batch: None,
            range: Some(1.0),
        }
    }
}

impl BatchConfig {
    pub fn to_mode(&self) -> CliResult<ada_ogd_core::BatchMode> {
        match self.mode.as_str() {
            "fixed" => {
                let batch = self.batch.ok_or_else(|| {
                    CliError::validation("mechanism.batch.batch", "fixed mode needs `batch`")
                })?;
                Ok(ada_ogd_core::BatchMode::Fixed { batch })
            }
            "hoeffding-tight" => {
                let range = self.range.ok_or_else(|| {
                    CliError::validation("mechanism.batch.range", "hoeffding-tight mode needs `range`")
                })?;
                Ok(ada_ogd_core::BatchMode::HoeffdingTight { range })
            }
            "paper-literal" => Ok(ada_ogd_core::BatchMode::PaperLiteral),
            other => Err(CliError::validation(
                "mechanism.batch.mode",
                format!("unknown batch mode `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub n: u16,
    pub rounds: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub samples: u64,
    #[serde(default)]
    pub batch: BatchConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u64>,
    /// Who picks the distribution: "analyst" (game line 1) or
    /// "environment".
    #[serde(default = "default_chooser")]
    pub chooser: String,
}

fn default_chooser() -> String {
    "analyst".into()
}

impl Default for DistributionConfig {
    fn default() -> Self {
        DistributionConfig {
            kind: "uniform".into(),
            path: None,
            label: None,
            index: None,
            chooser: default_chooser(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalystConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
}

impl Default for AnalystConfig {
    fn default() -> Self {
        AnalystConfig {
            name: "mixed".into(),
            query: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsqConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub queries: Vec<String>,
    /// Randomizations per query; 0 derives the default batch formula.
    #[serde(default)]
    pub batch: u64,
    #[serde(default)]
    pub salt: u64,
}

impl Default for DsqConfig {
    fn default() -> Self {
        DsqConfig {
            epsilon: 0.2,
            delta: 0.1,
            queries: vec!["label-mean".into()],
            batch: 0,
            salt: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoConfig {
    pub adversary: String,
    pub class: String,
    #[serde(default = "default_c_low")]
    pub c_low: f64,
    #[serde(default = "default_c_high")]
    pub c_high: f64,
}

fn default_c_low() -> f64 {
    2.0
}

fn default_c_high() -> f64 {
    10.0
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            adversary: "trivial".into(),
            class: "low".into(),
            c_low: default_c_low(),
            c_high: default_c_high(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayVerifyConfig {
    pub input_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "default_regret_instances")]
    pub regret_instances: u64,
    #[serde(default = "default_conc_fixtures")]
    pub concentration_fixtures: u64,
    #[serde(default = "default_conc_trials")]
    pub concentration_trials_per_fixture: u64,
}

fn default_regret_instances() -> u64 {
    1000
}

fn default_conc_fixtures() -> u64 {
    20
}

fn default_conc_trials() -> u64 {
    500
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            regret_instances: default_regret_instances(),
            concentration_fixtures: default_conc_fixtures(),
            concentration_trials_per_fixture: default_conc_trials(),
        }
    }
}

/// The full experiment description, all defaults materialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub mechanism: MechanismConfig,
    #[serde(default)]
    pub distribution: DistributionConfig,
    #[serde(default)]
    pub analyst: AnalystConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsq: Option<DsqConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pso: Option<PsoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_verify: Option<ReplayVerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<ExperimentConfig> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::validation("config", e.to_string()))?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> CliResult<ExperimentConfig> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::validation("config", format!("{}: {e}", path.as_ref().display()))
        })?;
        ExperimentConfig::from_toml(&text)
    }

    /// Fill per-mode defaults and check every field.
    pub fn resolve(mut self) -> CliResult<ExperimentConfig> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::validation(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.seeds.is_empty() {
            return Err(CliError::validation("seeds", "seed list must be nonempty"));
        }
        let m = &self.mechanism;
        if m.n == 0 || m.n > 63 {
            return Err(CliError::validation("mechanism.n", "bit width must lie in 1..=63"));
        }
        if m.rounds == 0 {
            return Err(CliError::validation("mechanism.rounds", "must be positive"));
        }
        if !(m.epsilon > 0.0 && m.epsilon < 1.0) {
            return Err(CliError::validation("mechanism.epsilon", "must lie in (0,1)"));
        }
        if !(m.delta > 0.0 && m.delta < 1.0) {
            return Err(CliError::validation("mechanism.delta", "must lie in (0,1)"));
        }
        if !(m.lambda > 0.0 && m.lambda <= 1.0) {
            return Err(CliError::validation("mechanism.lambda", "must lie in (0,1]"));
        }
        if m.samples == 0 {
            return Err(CliError::validation("mechanism.samples", "must be positive"));
        }
        m.batch.to_mode()?;
        match self.distribution.kind.as_str() {
            "uniform" | "labeled" | "point" => {}
            "pmf-file" => {
                let path = self.distribution.path.as_ref().ok_or_else(|| {
                    CliError::validation("distribution.path", "pmf-file kind needs `path`")
                })?;
                if !path.exists() {
                    return Err(CliError::validation(
                        "distribution.path",
                        format!("{} does not exist", path.display()),
                    ));
                }
            }
            other => {
                return Err(CliError::validation(
                    "distribution.kind",
                    format!("unknown kind `{other}`"),
                ))
            }
        }
        match self.distribution.chooser.as_str() {
            "analyst" | "environment" => {}
            other => {
                return Err(CliError::validation(
                    "distribution.chooser",
                    format!("unknown chooser `{other}`"),
                ))
            }
        }
        match self.mode {
            Mode::Aq => {}
            Mode::Pso => {
                let pso = self.pso.get_or_insert_with(PsoConfig::default);
                match pso.adversary.as_str() {
                    "trivial" | "bisect" => {}
                    other => {
                        return Err(CliError::validation(
                            "pso.adversary",
                            format!("unknown adversary `{other}`"),
                        ))
                    }
                }
                match pso.class.as_str() {
                    "low" | "high" => {}
                    other => {
                        return Err(CliError::validation(
                            "pso.class",
                            format!("class must be low or high, got `{other}`"),
                        ))
                    }
                }
                if pso.c_low <= 0.0 || pso.c_high <= 0.0 {
                    return Err(CliError::validation("pso", "thresholds must be positive"));
                }
            }
            Mode::Dsq => {
                let dsq = self.dsq.get_or_insert_with(DsqConfig::default);
                if !(dsq.epsilon > 0.0 && dsq.epsilon < 1.0) {
                    return Err(CliError::validation("dsq.epsilon", "must lie in (0,1)"));
                }
                if !(dsq.delta > 0.0 && dsq.delta < 1.0) {
                    return Err(CliError::validation("dsq.delta", "must lie in (0,1)"));
                }
                if dsq.queries.is_empty() {
                    return Err(CliError::validation("dsq.queries", "need at least one query"));
                }
                if self.distribution.kind != "labeled" {
                    return Err(CliError::validation(
                        "distribution.kind",
                        "dsq mode requires the labeled distribution",
                    ));
                }
                if self.mechanism.n < 2 {
                    return Err(CliError::validation("mechanism.n", "dsq mode needs n >= 2"));
                }
            }
            Mode::ReplayVerify => {
                let rv = self.replay_verify.as_ref().ok_or_else(|| {
                    CliError::validation("replay_verify", "replay-verify mode needs [replay_verify]")
                })?;
                if !rv.input_dir.exists() {
                    return Err(CliError::validation(
                        "replay_verify.input_dir",
                        format!("{} does not exist", rv.input_dir.display()),
                    ));
                }
            }
            Mode::TheoryCheck => {
                let t = self.theory.get_or_insert_with(TheoryConfig::default);
                if t.regret_instances == 0 || t.concentration_fixtures == 0 {
                    return Err(CliError::validation("theory", "instance counts must be positive"));
                }
            }
        }
        if self.distribution.kind == "labeled" {
            if self.mechanism.n < 2 {
                return Err(CliError::validation(
                    "mechanism.n",
                    "labeled distributions need n >= 2",
                ));
            }
            if self.distribution.label.is_none() {
                self.distribution.label = Some("parity".into());
            }
        }
        match self.analyst.name.as_str() {
            "static" => {
                if self.analyst.query.is_none() {
                    return Err(CliError::validation(
                        "analyst.query",
                        "static analyst needs a query spec",
                    ));
                }
            }
            "random" | "overfit" | "mixed" => {}
            other if self.mode == Mode::Aq || self.mode == Mode::ReplayVerify => {
                return Err(CliError::validation(
                    "analyst.name",
                    format!("unknown analyst `{other}`"),
                ));
            }
            _ => {}
        }
        Ok(self)
    }

    /// Canonical TOML echo of the resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
mode = "aq"
out_dir = "out"
seeds = [1, 2]

[mechanism]
n = 8
rounds = 50
epsilon = 0.25
delta = 0.1
lambda = 1.0
samples = 100
"#;

    #[test]
    fn minimal_config_resolves() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap().resolve().unwrap();
        assert_eq!(cfg.mode, Mode::Aq);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.analyst.name, "mixed");
        assert_eq!(cfg.distribution.kind, "uniform");
        // Echo round-trips.
        let echoed = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(echoed.to_toml(), cfg.to_toml());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = MINIMAL.replace("samples = 100", "samples = 100\ntypo_key = 3");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");
    }

    #[test]
    fn field_paths_in_validation_errors() {
        let bad = MINIMAL.replace("epsilon = 0.25", "epsilon = 1.5");
        let err = ExperimentConfig::from_toml(&bad).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("mechanism.epsilon"), "{err}");

        let bad = MINIMAL.replace("seeds = [1, 2]", "seeds = []");
        let err = ExperimentConfig::from_toml(&bad).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
    }

    #[test]
    fn schema_version_is_checked() {
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        let err = ExperimentConfig::from_toml(&bad).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("schema_version"), "{err}");
    }

    #[test]
    fn static_analyst_requires_query() {
        let bad = MINIMAL.to_string() + "\n[analyst]\nname = \"static\"\n";
        let err = ExperimentConfig::from_toml(&bad).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("analyst.query"), "{err}");
    }
}

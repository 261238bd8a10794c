//! Experiment configuration: one JSON document with sections
//! `space`, `semantics`, `polarize`, `blend`, `flow` and `experiment`.
//!
//! Unknown keys are rejected at every level. Overrides are dotted paths with
//! JSON values (`blend.lambda=0`, `blend.score=[0.2,0.9]`); a value that does
//! not parse as JSON is taken as a string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::blend::{BlendMode, DrawPolicy};
use crate::cogspace::{CognitiveSpace, ScoreVector};
use crate::flow::{Decoder, IntegrationConfig, Solver};
use crate::polarize::{LlmBackend, LlmConfig, PolarizationCache, PolarizeError, PolarizerBackend, TemplateBackend, DEFAULT_CACHE_PATH};
use crate::semantics::{SemanticConfig, SemanticModel, SemanticsError};

/// Environment variable overriding the polarization cache location.
pub const CACHE_PATH_ENV: &str = "COGFLOW_CACHE_PATH";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("override `{0}` is not of the form key.path=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarizeSection {
    pub base_prompt: String,
    pub backend: BackendKind,
    /// Cache file; `./polarize_cache.ndjson` when absent and the environment
    /// does not name one. `"memory"` keeps the cache in memory only.
    pub cache_path: Option<String>,
    pub llm: LlmConfig,
}

impl Default for PolarizeSection {
    fn default() -> Self {
        Self {
            base_prompt: "a valley".into(),
            backend: BackendKind::Template,
            cache_path: None,
            llm: LlmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendSection {
    pub mode: BlendMode,
    /// Share of the base-prompt field; the anchor term gets `1 - lambda`.
    pub lambda: f64,
    /// Target profile; the hypercube center when absent.
    pub score: Option<Vec<f64>>,
    pub draw: DrawPolicy,
}

impl Default for BlendSection {
    fn default() -> Self {
        Self {
            mode: BlendMode::FullAverage,
            lambda: 0.5,
            score: None,
            draw: DrawPolicy::PerEvaluation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub solver: Solver,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub record_trajectory: bool,
    pub decoder: Decoder,
    /// Steps of the moment-ODE reference.
    pub moment_steps: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            solver: Solver::Rk4,
            steps: 100,
            samples: 2048,
            seed: 0,
            record_trajectory: false,
            decoder: Decoder::Identity,
            moment_steps: 2000,
        }
    }
}

impl FlowSection {
    pub fn integration(&self) -> IntegrationConfig {
        IntegrationConfig {
            solver: self.solver,
            steps: self.steps,
            record_trajectory: self.record_trajectory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    VertexRecovery,
    ContinuitySweep,
    OrderBias,
    CostAccounting,
    StochasticEquivalence,
    ResponseSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::VertexRecovery,
        ExperimentKind::ContinuitySweep,
        ExperimentKind::OrderBias,
        ExperimentKind::CostAccounting,
        ExperimentKind::StochasticEquivalence,
        ExperimentKind::ResponseSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VertexRecovery => "vertex_recovery",
            ExperimentKind::ContinuitySweep => "continuity_sweep",
            ExperimentKind::OrderBias => "order_bias",
            ExperimentKind::CostAccounting => "cost_accounting",
            ExperimentKind::StochasticEquivalence => "stochastic_equivalence",
            ExperimentKind::ResponseSweep => "response_sweep",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    /// Path endpoints for the continuity sweep; all-zeros to all-ones when absent.
    pub path_start: Option<Vec<f64>>,
    pub path_end: Option<Vec<f64>>,
    /// Fractions along the path at which continuity is probed.
    pub path_points: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Seeds (samples per mode) for the stochastic equivalence run.
    pub seeds: usize,
    /// 1-based dimension swept by the response sweep.
    pub sweep_axis: usize,
    pub sweep_values: Vec<f64>,
    pub output_dir: Option<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: None,
            path_start: None,
            path_end: None,
            path_points: vec![0.25, 0.5, 0.75],
            deltas: vec![1e-2, 1e-3, 1e-4],
            seeds: 200,
            sweep_axis: 1,
            sweep_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub space: CognitiveSpace,
    #[serde(default)]
    pub semantics: SemanticConfig,
    #[serde(default)]
    pub polarize: PolarizeSection,
    #[serde(default)]
    pub blend: BlendSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Sets `path` (dotted) in `doc` to `value`, creating objects as needed.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(assignment.into()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(ConfigError::Override(assignment.into()));
        }
        node = node
            .as_object_mut()
            .expect("checked")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    pub fn from_value(mut doc: Value, overrides: &[String]) -> Result<Self, ConfigError> {
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: Config = serde_json::from_value(doc)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        Self::from_value(serde_json::from_str(text)?, overrides)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, overrides)
    }

    /// A minimal config over `n` numbered dimensions.
    pub fn numbered(n: usize) -> Self {
        Self {
            space: CognitiveSpace::numbered(n).expect("valid dimension count"),
            semantics: SemanticConfig::default(),
            polarize: PolarizeSection {
                cache_path: Some("memory".into()),
                ..PolarizeSection::default()
            },
            blend: BlendSection::default(),
            flow: FlowSection::default(),
            experiment: ExperimentSection::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        SemanticModel::new(&self.space, &self.semantics)?;
        self.score()?;
        if !(0.0..=1.0).contains(&self.blend.lambda) {
            return invalid(format!("blend.lambda {} is outside [0, 1]", self.blend.lambda));
        }
        if self.flow.steps == 0 || self.flow.samples == 0 || self.flow.moment_steps == 0 {
            return invalid("flow.steps, flow.samples and flow.moment_steps must be positive".into());
        }
        if self.polarize.base_prompt.is_empty() {
            return invalid("polarize.base_prompt is empty".into());
        }
        let n = self.space.n();
        if self.experiment.sweep_axis == 0 || self.experiment.sweep_axis > n {
            return invalid(format!("experiment.sweep_axis must be in 1..={n}"));
        }
        for v in &self.experiment.sweep_values {
            if !(0.0..=1.0).contains(v) {
                return invalid(format!("sweep value {v} is outside [0, 1]"));
            }
        }
        for p in [&self.experiment.path_start, &self.experiment.path_end].into_iter().flatten() {
            self.space
                .score(p.clone())
                .map_err(|e| ConfigError::Invalid(format!("path endpoint: {e}")))?;
        }
        if self.experiment.deltas.iter().any(|d| !(*d >= 0.0)) {
            return invalid("experiment.deltas must be non-negative".into());
        }
        Ok(())
    }

    pub fn score(&self) -> Result<ScoreVector, ConfigError> {
        let values = self
            .blend
            .score
            .clone()
            .unwrap_or_else(|| vec![0.5; self.space.n()]);
        self.space
            .score(values)
            .map_err(|e| ConfigError::Invalid(format!("blend.score: {e}")))
    }

    pub fn semantic_model(&self) -> Result<SemanticModel, ConfigError> {
        Ok(SemanticModel::new(&self.space, &self.semantics)?)
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Cache location: environment first, then the config, then the default.
    /// `None` means in-memory.
    pub fn cache_path(&self) -> Option<PathBuf> {
        let chosen = std::env::var(CACHE_PATH_ENV)
            .ok()
            .filter(|p| !p.is_empty())
            .or_else(|| self.polarize.cache_path.clone())
            .unwrap_or_else(|| DEFAULT_CACHE_PATH.into());
        (chosen != "memory").then(|| PathBuf::from(chosen))
    }

    pub fn open_cache(&self) -> Result<PolarizationCache, PolarizeError> {
        match self.cache_path() {
            Some(p) => PolarizationCache::open(p),
            None => Ok(PolarizationCache::in_memory()),
        }
    }

    pub fn backend(&self, kind: BackendKind) -> Result<Box<dyn PolarizerBackend>, PolarizeError> {
        Ok(match kind {
            BackendKind::Template => Box::new(TemplateBackend),
            BackendKind::Llm => Box::new(LlmBackend::from_env(self.polarize.llm.clone())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"space":[{"name":"valence"},{"name":"arousal"}]}"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::from_json(MINIMAL, &[]).unwrap();
        assert_eq!(c.blend.lambda, 0.5);
        assert_eq!(c.flow.steps, 100);
        assert_eq!(c.flow.samples, 2048);
        assert_eq!(c.flow.solver, Solver::Rk4);
        assert_eq!(c.score().unwrap().values(), &[0.5, 0.5]);
        assert_eq!(c.semantic_model().unwrap().latent_dim(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"space":[{"name":"v"}],"blend":{"lamda":0.5}}"#;
        assert!(Config::from_json(bad, &[]).is_err());
        let bad = r#"{"space":[{"name":"v"}],"extra":{}}"#;
        assert!(Config::from_json(bad, &[]).is_err());
    }

    #[test]
    fn overrides_apply_dotted_paths() {
        let c = Config::from_json(
            MINIMAL,
            &[
                "blend.lambda=0".into(),
                "blend.score=[0.3,0.8]".into(),
                "polarize.base_prompt=a quiet lake".into(),
                "flow.solver=\"euler\"".into(),
                "semantics.position_bias=0.5".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.blend.lambda, 0.0);
        assert_eq!(c.blend.score, Some(vec![0.3, 0.8]));
        assert_eq!(c.polarize.base_prompt, "a quiet lake");
        assert_eq!(c.flow.solver, Solver::Euler);
        assert_eq!(c.semantics.position_bias, 0.5);
        assert!(Config::from_json(MINIMAL, &["novalue".into()]).is_err());
        assert!(Config::from_json(MINIMAL, &["blend.bogus=1".into()]).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(Config::from_json(MINIMAL, &["blend.lambda=2".into()]).is_err());
        assert!(Config::from_json(MINIMAL, &["blend.score=[0.3]".into()]).is_err());
        assert!(Config::from_json(MINIMAL, &["blend.score=[0.3,1.2]".into()]).is_err());
        assert!(Config::from_json(MINIMAL, &["flow.steps=0".into()]).is_err());
        assert!(Config::from_json(MINIMAL, &["experiment.sweep_axis=3".into()]).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = Config::from_json(MINIMAL, &[]).unwrap();
        let b = Config::from_json(MINIMAL, &[]).unwrap();
        let c = Config::from_json(MINIMAL, &["flow.seed=1".into()]).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn round_trips() {
        let a = Config::from_json(MINIMAL, &["experiment.kind=\"order_bias\"".into()]).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(Config::from_json(&text, &[]).unwrap(), a);
        assert_eq!(ExperimentKind::parse("order_bias"), Some(ExperimentKind::OrderBias));
    }
}

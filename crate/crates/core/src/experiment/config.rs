//! Run configuration: TOML or JSON with the same field names.
//!
//! Relative paths in a config file resolve against the file's directory.
//! `key=value` overrides use dotted keys (`analysis.replicates=2000`);
//! values parse as JSON when they can and are taken as strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ExperimentError;
use crate::embeddings::EmbeddingBackendConfig;
use crate::inference::LlmEndpoint;
use crate::metrics::MetricSettings;
use crate::prompting::{KeyCount, PromptMethod};
use crate::stats::{HolmFamily, SignificanceConfig};

/// Mock endpoints used when mock mode is on and none are configured:
/// `mock-1` .. `mock-6`, returning 1 to 6 abstract sentences.
pub const DEFAULT_MOCK_ENDPOINTS: usize = 6;

fn default_methods() -> Vec<PromptMethod> {
    PromptMethod::ALL.to_vec()
}
fn default_k_values() -> Vec<usize> {
    vec![1, 2]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Backends {
    /// Whole-text embeddings (key sentences, cosine similarity).
    pub sentence: EmbeddingBackendConfig,
    /// Per-token embeddings (BERTScore).
    pub token: EmbeddingBackendConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub family: HolmFamily,
    pub replicates: usize,
    pub level: f64,
    pub alpha: f64,
    /// Write `bootstrap_audit/<cell>.json` for every cell.
    pub bootstrap_audit: bool,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        let s = SignificanceConfig::default();
        AnalysisSettings {
            family: s.family,
            replicates: s.replicates,
            level: s.level,
            alpha: s.alpha,
            bootstrap_audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    #[serde(default)]
    pub endpoints: Vec<LlmEndpoint>,
    #[serde(default = "default_methods")]
    pub methods: Vec<PromptMethod>,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mock_mode: bool,
    /// Defaults to `run-<seed as 16 hex digits>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    /// Generation requests in flight.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub metrics: MetricSettings,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

impl RunConfig {
    /// Minimal config for a corpus directory, everything else default.
    pub fn new(corpus_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            corpus_dir: corpus_dir.into(),
            endpoints: Vec::new(),
            methods: default_methods(),
            k_values: default_k_values(),
            global_seed: 0,
            backends: Backends::default(),
            output_dir: default_output_dir(),
            mock_mode: false,
            run_id: None,
            concurrency: default_concurrency(),
            metrics: MetricSettings::default(),
            analysis: AnalysisSettings::default(),
        }
    }

    /// Reads a TOML (or, by `.json` extension, JSON) file, applies
    /// overrides and resolves relative paths against the file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut value: Value = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?
        } else {
            let t: toml::Value = toml::from_str(&text)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
            serde_json::to_value(t).map_err(|e| ExperimentError::Config(e.to_string()))?
        };
        for (k, v) in overrides {
            apply_override(&mut value, k, v)?;
        }
        let mut config: RunConfig = serde_json::from_value(value)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Makes relative paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.output_dir);
        for b in [&mut self.backends.sentence, &mut self.backends.token] {
            if let Some(p) = b.cache_path.as_mut() {
                fix(p);
            }
        }
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("run-{:016x}", self.global_seed))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_id())
    }

    /// Endpoints to use, with the default mock set filled in.
    pub fn effective_endpoints(&self) -> Vec<LlmEndpoint> {
        if self.endpoints.is_empty() && self.mock_mode {
            return (1..=DEFAULT_MOCK_ENDPOINTS)
                .map(|n| LlmEndpoint::mock(format!("mock-{n}"), n))
                .collect();
        }
        self.endpoints.clone()
    }

    /// Methods in reporting order, baseline added when anything is compared.
    pub fn effective_methods(&self) -> Vec<PromptMethod> {
        let mut m = self.methods.clone();
        if !m.is_empty() && !m.contains(&PromptMethod::Baseline) {
            m.push(PromptMethod::Baseline);
        }
        m.sort();
        m.dedup();
        m
    }

    /// K values whose key-sentence reference is scored: those of the CR and
    /// RA methods in the run.
    pub fn active_key_refs(&self) -> Vec<KeyCount> {
        let mut ks: Vec<KeyCount> = self
            .effective_methods()
            .iter()
            .filter_map(|m| match m {
                PromptMethod::Cr(k) | PromptMethod::Ra(k) => Some(*k),
                _ => None,
            })
            .collect();
        ks.sort();
        ks.dedup();
        ks
    }

    pub fn significance(&self) -> SignificanceConfig {
        SignificanceConfig {
            family: self.analysis.family,
            replicates: self.analysis.replicates,
            level: self.analysis.level,
            alpha: self.analysis.alpha,
            global_seed: self.global_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.k_values.is_empty() {
            return bad("k_values must not be empty".into());
        }
        for &k in &self.k_values {
            if KeyCount::new(k).is_none() {
                return bad(format!("k_values: {k} is not 1 or 2"));
            }
        }
        for m in &self.methods {
            if let Some(k) = m.k() {
                if !self.k_values.contains(&k.get()) {
                    return bad(format!("{m} needs k = {} in k_values", k.get()));
                }
            }
        }
        if self.concurrency == 0 {
            return bad("concurrency must be positive".into());
        }
        let endpoints = self.effective_endpoints();
        if endpoints.is_empty() {
            return bad("no endpoints configured (set endpoints or mock_mode)".into());
        }
        let mut ids: Vec<&str> = endpoints.iter().map(|e| e.llm_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate llm_id in endpoints".into());
        }
        for e in &endpoints {
            e.validate()
                .map_err(|err| ExperimentError::Config(err.to_string()))?;
            if !self.mock_mode && e.base_url.is_empty() {
                return bad(format!(
                    "{}: base_url is empty and mock_mode is off",
                    e.llm_id
                ));
            }
        }
        self.backends
            .sentence
            .validate()
            .and(self.backends.token.validate())
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.significance()
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let run_id = self.run_id();
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == ".." {
            return bad(format!("invalid run_id {run_id:?}"));
        }
        Ok(())
    }
}

/// Sets a dotted key in a JSON tree, creating objects as needed.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), ExperimentError> {
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ExperimentError::Config(format!("bad override key {key:?}")));
    }
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(ExperimentError::Config(format!(
                "override {key:?}: {part:?} is not a table"
            )));
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(ExperimentError::Config(format!(
            "override {key:?}: parent is not a table"
        ))),
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ExperimentError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(ExperimentError::Config(format!(
            "override {s:?} is not key=value"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_nest_and_parse() {
        let mut v = serde_json::json!({"corpus_dir": "c"});
        apply_override(&mut v, "analysis.replicates", "2000").unwrap();
        apply_override(&mut v, "mock_mode", "true").unwrap();
        apply_override(&mut v, "run_id", "abc").unwrap();
        let c: RunConfig = serde_json::from_value(v).unwrap();
        assert_eq!(c.analysis.replicates, 2000);
        assert!(c.mock_mode);
        assert_eq!(c.run_id(), "abc");
        assert!(parse_override("novalue").is_err());
        assert_eq!(
            parse_override("a.b=x=y").unwrap(),
            ("a.b".into(), "x=y".into())
        );
    }

    #[test]
    fn defaults_and_validation() {
        let mut c = RunConfig::new("corpus");
        assert!(c.validate().is_err(), "no endpoints and no mock mode");
        c.mock_mode = true;
        c.validate().unwrap();
        assert_eq!(c.effective_endpoints().len(), 6);
        assert_eq!(c.run_id(), "run-0000000000000000");
        assert_eq!(c.active_key_refs(), [KeyCount::One, KeyCount::Two]);
        c.methods = vec![PromptMethod::Cr(KeyCount::Two)];
        c.k_values = vec![1];
        assert!(c.validate().is_err());
        c.k_values = vec![2];
        assert_eq!(
            c.effective_methods(),
            [PromptMethod::Baseline, PromptMethod::Cr(KeyCount::Two)]
        );
        c.k_values = vec![3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let v = serde_json::json!({"corpus_dir": "c", "bogus": 1});
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}

//! Text embeddings behind pluggable backends, plus the exact vector
//! primitives used for key-sentence retrieval and semantic metrics.
//!
//! Three backends exist:
//!
//! * `deterministic_test`: each text (or token) is hashed with
//!   [`stable_hash`](crate::seed::stable_hash), the hash seeds a ChaCha8
//!   generator, `dim` standard-normal components are drawn and the vector is
//!   scaled to unit length. Identical strings embed identically and distinct
//!   strings are nearly orthogonal, so token-level similarity behaves like a
//!   one-hot encoding up to O(1/sqrt(dim)) noise. Fully offline.
//! * `http_sidecar`: `POST {endpoint_url}/embed` with `{"texts": [...],
//!   "mode": "sentence" | "tokens"}`. When `cache_path` is set every response
//!   is appended to the cache so later runs can replay it.
//! * `file_cache`: a content-addressed store (SHA-256 of the text) written by
//!   an earlier sidecar run. A miss is an error.
//!
//! Nearest-neighbour search is an exact flat scan under L2 distance, applied
//! to vectors exactly as the backend returns them (no renormalisation).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::tokenize;
use crate::seed::{sha256_hex, stable_hash};

pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("vector is empty")]
    EmptyVector,
    #[error("nothing to embed")]
    EmptyInput,
    #[error("invalid k = {k} for {available} candidates")]
    InvalidK { k: usize, available: usize },
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("embedding sidecar unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
    #[error("embedding sidecar returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed sidecar response: {0}")]
    Malformed(String),
    #[error("no cached embedding for text with sha256 {0}")]
    CacheMiss(String),
    #[error("embedding cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, EmbeddingError> {
        if components.is_empty() {
            return Err(EmbeddingError::EmptyVector);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(EmbeddingVector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64, EmbeddingError> {
        check_dims(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Componentwise mean of equally sized vectors.
    pub fn mean(vectors: &[EmbeddingVector]) -> Result<Self, EmbeddingError> {
        let first = vectors.first().ok_or(EmbeddingError::EmptyInput)?;
        let mut acc = vec![0.0; first.dim()];
        for v in vectors {
            check_dims(first, v)?;
            for (a, c) in acc.iter_mut().zip(&v.0) {
                *a += c;
            }
        }
        let n = vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        EmbeddingVector::new(acc)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance.
pub fn l2_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    check_dims(a, b)?;
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `<a, b> / (|a| |b|)`, clamped to [-1, 1] against rounding. Identical
/// vectors give exactly 1.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    if a == b {
        return Ok(1.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Indices of the `k` candidates closest to `query`, nearest first; equal
/// distances keep ascending index order.
pub fn top_k_nearest(
    query: &EmbeddingVector,
    candidates: &[EmbeddingVector],
    k: usize,
) -> Result<Vec<usize>, EmbeddingError> {
    if k == 0 || k > candidates.len() {
        return Err(EmbeddingError::InvalidK {
            k,
            available: candidates.len(),
        });
    }
    let mut scored = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| l2_distance(query, c).map(|d| (d, i)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    DeterministicTest,
    HttpSidecar,
    FileCache,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}
fn default_concurrency() -> usize {
    4
}
fn default_batch() -> usize {
    64
}
fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBackendConfig {
    pub kind: BackendKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    /// Maximum sidecar requests in flight.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Texts per sidecar request.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
}

impl EmbeddingBackendConfig {
    pub fn deterministic(dim: usize) -> Self {
        EmbeddingBackendConfig {
            kind: BackendKind::DeterministicTest,
            dim,
            endpoint_url: None,
            cache_path: None,
            concurrency: default_concurrency(),
            batch_size: default_batch(),
            timeout_seconds: default_timeout(),
        }
    }

    pub fn sidecar(url: impl Into<String>, dim: usize) -> Self {
        EmbeddingBackendConfig {
            kind: BackendKind::HttpSidecar,
            endpoint_url: Some(url.into()),
            ..Self::deterministic(dim)
        }
    }

    pub fn file_cache(path: impl Into<PathBuf>, dim: usize) -> Self {
        EmbeddingBackendConfig {
            kind: BackendKind::FileCache,
            cache_path: Some(path.into()),
            ..Self::deterministic(dim)
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim == 0 {
            return Err(EmbeddingError::Config("dim must be positive".into()));
        }
        if self.concurrency == 0 || self.batch_size == 0 {
            return Err(EmbeddingError::Config(
                "concurrency and batch_size must be positive".into(),
            ));
        }
        match self.kind {
            BackendKind::HttpSidecar if self.endpoint_url.is_none() => Err(EmbeddingError::Config(
                "http_sidecar requires endpoint_url".into(),
            )),
            BackendKind::FileCache if self.cache_path.is_none() => Err(EmbeddingError::Config(
                "file_cache requires cache_path".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl Default for EmbeddingBackendConfig {
    fn default() -> Self {
        Self::deterministic(DEFAULT_DIM)
    }
}

/// One token of a text together with its (possibly contextual) vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbedding {
    pub token: String,
    pub vector: EmbeddingVector,
}

/// Whole-text embeddings.
pub trait SentenceEmbedder: Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

/// Per-token embeddings, as consumed by BERTScore.
pub trait TokenEmbedder: Sync {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, EmbeddingError>;
}

/// Embeds `texts` with a backend built from `config`.
pub fn embed_texts(
    config: &EmbeddingBackendConfig,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    EmbeddingBackend::new(config.clone())?.embed(texts)
}

/// Unit-length vector derived only from `text`.
pub fn deterministic_vector(text: &str, dim: usize) -> EmbeddingVector {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[text]));
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= norm);
    EmbeddingVector(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    Sentence,
    Tokens,
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
    mode: EmbedMode,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    #[serde(default)]
    model_id: Option<String>,
    vectors: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    sha256: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<TokenEmbedding>>,
}

/// JSONL store keyed by the SHA-256 of the embedded text.
#[derive(Debug)]
struct VectorCache {
    path: PathBuf,
    sentences: HashMap<String, EmbeddingVector>,
    tokens: HashMap<String, Vec<TokenEmbedding>>,
    writer: Option<File>,
}

impl VectorCache {
    fn open(path: PathBuf, dim: usize, writable: bool) -> Result<Self, EmbeddingError> {
        let cache_err = |message: String| EmbeddingError::Cache {
            path: path.clone(),
            message,
        };
        let mut sentences = HashMap::new();
        let mut tokens = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| cache_err(e.to_string()))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| cache_err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| cache_err(format!("line {}: {e}", lineno + 1)))?;
                if rec.dim != dim {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: dim,
                        got: rec.dim,
                    });
                }
                if let Some(v) = rec.vector {
                    sentences.insert(rec.sha256.clone(), EmbeddingVector::new(v)?);
                }
                if let Some(t) = rec.tokens {
                    tokens.insert(rec.sha256, t);
                }
            }
        } else if !writable {
            return Err(cache_err("cache file does not exist".into()));
        }
        let writer = if writable {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| cache_err(e.to_string()))?;
            }
            Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| cache_err(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(VectorCache {
            path,
            sentences,
            tokens,
            writer,
        })
    }

    fn append(&mut self, rec: &CacheRecord) -> Result<(), EmbeddingError> {
        if let Some(w) = self.writer.as_mut() {
            let line = serde_json::to_string(rec).expect("cache record serializes");
            writeln!(w, "{line}").map_err(|e| EmbeddingError::Cache {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// A ready-to-use backend.
#[derive(Debug)]
pub struct EmbeddingBackend {
    config: EmbeddingBackendConfig,
    cache: Option<Mutex<VectorCache>>,
    agent: Option<ureq::Agent>,
}

impl EmbeddingBackend {
    pub fn new(config: EmbeddingBackendConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let cache = match (config.kind, &config.cache_path) {
            (BackendKind::DeterministicTest, _) | (_, None) => None,
            (kind, Some(path)) => Some(Mutex::new(VectorCache::open(
                path.clone(),
                config.dim,
                kind == BackendKind::HttpSidecar,
            )?)),
        };
        let agent = (config.kind == BackendKind::HttpSidecar).then(|| {
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(config.timeout_seconds)))
                .http_status_as_error(false)
                .build()
                .into()
        });
        Ok(EmbeddingBackend {
            config,
            cache,
            agent,
        })
    }

    pub fn config(&self) -> &EmbeddingBackendConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// One vector per text in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        match self.config.kind {
            BackendKind::DeterministicTest => Ok(texts
                .iter()
                .map(|t| deterministic_vector(t, self.config.dim))
                .collect()),
            BackendKind::FileCache => {
                let cache = self
                    .cache
                    .as_ref()
                    .expect("file_cache has a cache")
                    .lock()
                    .unwrap();
                texts
                    .iter()
                    .map(|t| {
                        let key = sha256_hex(t);
                        cache
                            .sentences
                            .get(&key)
                            .cloned()
                            .ok_or(EmbeddingError::CacheMiss(key))
                    })
                    .collect()
            }
            BackendKind::HttpSidecar => self.embed_remote(texts),
        }
    }

    /// Token vectors for each text in input order.
    pub fn embed_tokens_batch(
        &self,
        texts: &[String],
    ) -> Result<Vec<Vec<TokenEmbedding>>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        match self.config.kind {
            BackendKind::DeterministicTest => Ok(texts
                .iter()
                .map(|t| {
                    tokenize(t)
                        .tokens
                        .into_iter()
                        .map(|token| TokenEmbedding {
                            vector: deterministic_vector(&token, self.config.dim),
                            token,
                        })
                        .collect()
                })
                .collect()),
            BackendKind::FileCache => {
                let cache = self
                    .cache
                    .as_ref()
                    .expect("file_cache has a cache")
                    .lock()
                    .unwrap();
                texts
                    .iter()
                    .map(|t| {
                        let key = sha256_hex(t);
                        cache
                            .tokens
                            .get(&key)
                            .cloned()
                            .ok_or(EmbeddingError::CacheMiss(key))
                    })
                    .collect()
            }
            BackendKind::HttpSidecar => self.embed_tokens_remote(texts),
        }
    }

    fn embed_remote(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut missing: Vec<String> = Vec::new();
        if let Some(cache) = &self.cache {
            let cache = cache.lock().unwrap();
            for t in texts {
                if !cache.sentences.contains_key(&sha256_hex(t)) && !missing.contains(t) {
                    missing.push(t.clone());
                }
            }
        } else {
            missing = texts.to_vec();
        }
        let mut fresh: HashMap<String, EmbeddingVector> = HashMap::new();
        if !missing.is_empty() {
            let vectors = self.request_all(&missing, EmbedMode::Sentence, |value, n| {
                let rows: Vec<Vec<f64>> = serde_json::from_value(value)
                    .map_err(|e| EmbeddingError::Malformed(e.to_string()))?;
                if rows.len() != n {
                    return Err(EmbeddingError::Malformed(format!(
                        "expected {n} vectors, got {}",
                        rows.len()
                    )));
                }
                rows.into_iter()
                    .map(|r| self.checked_vector(r))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            if let Some(cache) = &self.cache {
                let mut cache = cache.lock().unwrap();
                for (text, v) in missing.iter().zip(&vectors) {
                    let key = sha256_hex(text);
                    cache.append(&CacheRecord {
                        sha256: key.clone(),
                        dim: self.config.dim,
                        vector: Some(v.0.clone()),
                        tokens: None,
                    })?;
                    cache.sentences.insert(key, v.clone());
                }
            }
            fresh = missing.into_iter().zip(vectors).collect();
        }
        let cache = self.cache.as_ref().map(|c| c.lock().unwrap());
        texts
            .iter()
            .map(|t| {
                if let Some(v) = fresh.get(t) {
                    return Ok(v.clone());
                }
                let key = sha256_hex(t);
                cache
                    .as_ref()
                    .and_then(|c| c.sentences.get(&key).cloned())
                    .ok_or(EmbeddingError::CacheMiss(key))
            })
            .collect()
    }

    fn embed_tokens_remote(
        &self,
        texts: &[String],
    ) -> Result<Vec<Vec<TokenEmbedding>>, EmbeddingError> {
        let cached = |t: &String| {
            self.cache
                .as_ref()
                .and_then(|c| c.lock().unwrap().tokens.get(&sha256_hex(t)).cloned())
        };
        let mut missing: Vec<String> = Vec::new();
        for t in texts {
            if cached(t).is_none() && !missing.contains(t) {
                missing.push(t.clone());
            }
        }
        let mut fresh: HashMap<String, Vec<TokenEmbedding>> = HashMap::new();
        if !missing.is_empty() {
            let rows = self.request_all(&missing, EmbedMode::Tokens, |value, n| {
                let rows: Vec<Vec<TokenEmbedding>> = serde_json::from_value(value)
                    .map_err(|e| EmbeddingError::Malformed(e.to_string()))?;
                if rows.len() != n {
                    return Err(EmbeddingError::Malformed(format!(
                        "expected {n} token lists, got {}",
                        rows.len()
                    )));
                }
                for t in rows.iter().flatten() {
                    if t.vector.dim() != self.config.dim {
                        return Err(EmbeddingError::DimensionMismatch {
                            expected: self.config.dim,
                            got: t.vector.dim(),
                        });
                    }
                }
                Ok(rows)
            })?;
            if let Some(cache) = &self.cache {
                let mut cache = cache.lock().unwrap();
                for (text, toks) in missing.iter().zip(&rows) {
                    let key = sha256_hex(text);
                    cache.append(&CacheRecord {
                        sha256: key.clone(),
                        dim: self.config.dim,
                        vector: None,
                        tokens: Some(toks.clone()),
                    })?;
                    cache.tokens.insert(key, toks.clone());
                }
            }
            fresh = missing.into_iter().zip(rows).collect();
        }
        texts
            .iter()
            .map(|t| {
                fresh
                    .get(t)
                    .cloned()
                    .or_else(|| cached(t))
                    .ok_or_else(|| EmbeddingError::CacheMiss(sha256_hex(t)))
            })
            .collect()
    }

    fn checked_vector(&self, raw: Vec<f64>) -> Result<EmbeddingVector, EmbeddingError> {
        if raw.len() != self.config.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.config.dim,
                got: raw.len(),
            });
        }
        EmbeddingVector::new(raw)
    }

    /// Sends `texts` in batches with at most `concurrency` requests in
    /// flight; batch results are reassembled in input order.
    fn request_all<T: Send>(
        &self,
        texts: &[String],
        mode: EmbedMode,
        parse: impl Fn(serde_json::Value, usize) -> Result<Vec<T>, EmbeddingError> + Sync,
    ) -> Result<Vec<T>, EmbeddingError> {
        let batches: Vec<&[String]> = texts.chunks(self.config.batch_size).collect();
        let next = AtomicUsize::new(0);
        type Slot<T> = Option<Result<Vec<T>, EmbeddingError>>;
        let slots: Mutex<Vec<Slot<T>>> = Mutex::new((0..batches.len()).map(|_| None).collect());
        let workers = self.config.concurrency.min(batches.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(i) else { break };
                    let result = self
                        .post_embed(batch, mode)
                        .and_then(|v| parse(v, batch.len()));
                    slots.lock().unwrap()[i] = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in slots.into_inner().unwrap() {
            out.extend(slot.expect("every batch was processed")?);
        }
        Ok(out)
    }

    fn post_embed(
        &self,
        texts: &[String],
        mode: EmbedMode,
    ) -> Result<serde_json::Value, EmbeddingError> {
        let base = self.config.endpoint_url.as_deref().unwrap_or_default();
        let url = format!("{}/embed", base.trim_end_matches('/'));
        let agent = self.agent.as_ref().expect("sidecar backend has an agent");
        let mut resp = agent
            .post(&url)
            .send_json(EmbedRequest { texts, mode })
            .map_err(|e| EmbeddingError::Unreachable {
                url: url.clone(),
                message: e.to_string(),
            })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_string()
            .map_err(|e| EmbeddingError::Unreachable {
                url: url.clone(),
                message: e.to_string(),
            })?;
        if !(200..300).contains(&status) {
            return Err(EmbeddingError::Status { status, body });
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&body).map_err(|e| EmbeddingError::Malformed(e.to_string()))?;
        if parsed.dim != self.config.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.config.dim,
                got: parsed.dim,
            });
        }
        if let Some(model) = &parsed.model_id {
            log::debug!("sidecar {url} served {} texts with {model}", texts.len());
        }
        Ok(parsed.vectors)
    }
}

impl SentenceEmbedder for EmbeddingBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        EmbeddingBackend::embed(self, texts)
    }
}

impl TokenEmbedder for EmbeddingBackend {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, EmbeddingError> {
        let mut rows = self.embed_tokens_batch(&[text.to_string()])?;
        Ok(rows.pop().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distances() {
        assert_eq!(l2_distance(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(l2_distance(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 5.0);
        let d = l2_distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            l2_distance(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosines() {
        assert_eq!(cosine_sim(&v(&[2.0, 1.0]), &v(&[2.0, 1.0])).unwrap(), 1.0);
        assert_eq!(cosine_sim(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_sim(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            cosine_sim(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])),
            Err(EmbeddingError::ZeroNorm)
        ));
    }

    #[test]
    fn top_k_cases() {
        let q = v(&[0.0, 0.0]);
        assert_eq!(top_k_nearest(&q, &[v(&[9.0, 9.0])], 1).unwrap(), vec![0]);
        let c = [v(&[5.0, 0.0]), v(&[1.0, 0.0]), v(&[3.0, 0.0])];
        assert_eq!(top_k_nearest(&q, &c, 2).unwrap(), vec![1, 2]);
        let tie = [v(&[0.0, 1.0]), v(&[1.0, 0.0])];
        assert_eq!(top_k_nearest(&q, &tie, 1).unwrap(), vec![0]);
        assert!(top_k_nearest(&q, &c, 0).is_err());
        assert!(top_k_nearest(&q, &c, 4).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(EmbeddingError::NonFinite)
        ));
        assert!(serde_json::from_str::<EmbeddingVector>("[]").is_err());
    }

    #[test]
    fn deterministic_backend() {
        let backend = EmbeddingBackend::new(EmbeddingBackendConfig::default()).unwrap();
        let out = backend
            .embed(&["a".into(), "a".into(), "b".into()])
            .unwrap();
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0], out[2]);
        assert_eq!(out[0].dim(), 384);
        assert!((out[0].norm() - 1.0).abs() < 1e-12);
        assert!(backend.embed(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = EmbeddingBackendConfig::sidecar("http://x", 384);
        c.endpoint_url = None;
        assert!(c.validate().is_err());
        let mut f = EmbeddingBackendConfig::file_cache("/tmp/x", 384);
        f.cache_path = None;
        assert!(f.validate().is_err());
        assert!(EmbeddingBackendConfig::deterministic(0).validate().is_err());
    }
}

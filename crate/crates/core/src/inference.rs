//! Summary generation against chat-completion style HTTP endpoints, and a
//! deterministic offline mock.
//!
//! Requests carry the prompt as the only user message and a `max_tokens`
//! cap, and never any sampling parameter, so every model runs with its own
//! default sampling configuration.

use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::segment_sentences;
use crate::prompting::{PromptMethod, PromptSpec};

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 300;
pub const DEFAULT_TIMEOUT_SECONDS: u64 = 180;
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_RETRY_BASE_SECONDS: f64 = 2.0;
pub const CHAT_COMPLETIONS_PATH: &str = "/v1/chat/completions";

/// Request fields that would override a model's sampling defaults.
pub const SAMPLING_KEYS: [&str; 9] = [
    "temperature",
    "top_p",
    "top_k",
    "typical_p",
    "repetition_penalty",
    "frequency_penalty",
    "presence_penalty",
    "do_sample",
    "seed",
];

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("server error HTTP {status} persisted after {attempts} attempt(s)")]
    TransientFailure { status: u16, attempts: u32 },
    #[error("HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("environment variable {0} holding the bearer token is not set")]
    MissingToken(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid endpoint config: {0}")]
    InvalidEndpoint(String),
    #[error("prompt text is empty")]
    EmptyPrompt,
}

impl InferenceError {
    /// Short machine-readable kind for run logs.
    pub fn kind(&self) -> &'static str {
        match self {
            InferenceError::Timeout { .. } => "timeout",
            InferenceError::TransientFailure { .. } => "transient_failure",
            InferenceError::HttpStatus { .. } => "http_status",
            InferenceError::EmptyCompletion => "empty_completion",
            InferenceError::Transport(_) => "transport",
            InferenceError::MissingToken(_) => "missing_token",
            InferenceError::Malformed(_) => "malformed_response",
            InferenceError::InvalidEndpoint(_) => "invalid_endpoint",
            InferenceError::EmptyPrompt => "empty_prompt",
        }
    }
}

fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}
fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECONDS
}
fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}
fn default_retry_base() -> f64 {
    DEFAULT_RETRY_BASE_SECONDS
}
fn default_path() -> String {
    CHAT_COMPLETIONS_PATH.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub llm_id: String,
    #[serde(default)]
    pub base_url: String,
    /// Value of the request `model` field; defaults to `llm_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the env var holding the bearer token; empty sends no auth.
    #[serde(default)]
    pub auth_token_env: String,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Delay before retry i (0-based) is `retry_base_seconds * 4^i`.
    #[serde(default = "default_retry_base")]
    pub retry_base_seconds: f64,
    #[serde(default = "default_path")]
    pub path: String,
    /// Send `{"inputs", "parameters"}` instead of chat messages.
    #[serde(default)]
    pub raw_text_completion: bool,
    /// Regex for a leading reasoning block to drop before scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_reasoning: Option<String>,
    /// Sentences returned by the mock generator for this endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_sentences: Option<usize>,
}

impl LlmEndpoint {
    pub fn new(llm_id: impl Into<String>, base_url: impl Into<String>) -> Self {
        LlmEndpoint {
            llm_id: llm_id.into(),
            base_url: base_url.into(),
            model: None,
            auth_token_env: String::new(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            max_retries: DEFAULT_MAX_RETRIES,
            retry_base_seconds: DEFAULT_RETRY_BASE_SECONDS,
            path: default_path(),
            raw_text_completion: false,
            strip_reasoning: None,
            mock_sentences: None,
        }
    }

    pub fn mock(llm_id: impl Into<String>, n_sentences: usize) -> Self {
        LlmEndpoint {
            mock_sentences: Some(n_sentences),
            ..LlmEndpoint::new(llm_id, "")
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| {
            Err(InferenceError::InvalidEndpoint(format!(
                "{}: {m}",
                self.llm_id
            )))
        };
        if self.llm_id.trim().is_empty() {
            return Err(InferenceError::InvalidEndpoint("llm_id is empty".into()));
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.timeout_seconds == 0 {
            return bad("timeout_seconds must be positive");
        }
        if self.retry_base_seconds.is_nan() || self.retry_base_seconds < 0.0 {
            return bad("retry_base_seconds must be non-negative");
        }
        if let Some(re) = &self.strip_reasoning {
            if let Err(e) = Regex::new(re) {
                return bad(&format!("strip_reasoning: {e}"));
            }
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }

    fn retry_delay(&self, retry: u32) -> Duration {
        Duration::from_secs_f64(self.retry_base_seconds * 4f64.powi(retry as i32))
    }
}

/// One generated summary with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub paper_id: String,
    pub llm_id: String,
    pub method: PromptMethod,
    pub prompt_text: String,
    pub summary_text: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

impl SummaryRecord {
    /// Resume/ordering key.
    pub fn key(&self) -> (String, String, PromptMethod) {
        (self.paper_id.clone(), self.llm_id.clone(), self.method)
    }
}

/// One HTTP attempt, as written to the run log. Never contains credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub paper_id: String,
    pub llm_id: String,
    pub method: PromptMethod,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub elapsed_ms: u64,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

/// JSON body for `prompt` under `endpoint`'s wire dialect.
pub fn build_request_body(endpoint: &LlmEndpoint, prompt: &PromptSpec) -> Value {
    if endpoint.raw_text_completion {
        json!({
            "inputs": prompt.prompt_text,
            "parameters": {
                "max_new_tokens": endpoint.max_new_tokens,
                "return_full_text": false,
            },
        })
    } else {
        json!({
            "model": endpoint.model.as_deref().unwrap_or(&endpoint.llm_id),
            "messages": [{"role": "user", "content": prompt.prompt_text}],
            "max_tokens": endpoint.max_new_tokens,
        })
    }
}

/// Extracts `(text, finish_reason)` from a response body.
fn parse_completion(body: &Value, raw: bool) -> Result<(String, Option<String>), InferenceError> {
    let malformed = || InferenceError::Malformed(truncate(&body.to_string(), 200));
    if raw {
        let item = match body {
            Value::Array(items) => items.first().ok_or_else(malformed)?,
            other => other,
        };
        let text = item
            .get("generated_text")
            .and_then(Value::as_str)
            .ok_or_else(malformed)?;
        return Ok((text.to_string(), None));
    }
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(malformed)?;
    let text = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .unwrap_or_default();
    let finish = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .map(str::to_string);
    Ok((text.to_string(), finish))
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Drops a leading match of `pattern` from `text`.
pub fn strip_leading(text: &str, pattern: &Regex) -> String {
    match pattern.find(text) {
        Some(m) if m.start() == 0 => text[m.end()..].trim_start().to_string(),
        _ => text.to_string(),
    }
}

enum Attempt {
    Done(String, Option<String>),
    Retryable(InferenceError),
    Fatal(InferenceError),
}

/// Generates one summary, retrying timeouts and 5xx responses.
pub fn generate_summary(
    endpoint: &LlmEndpoint,
    prompt: &PromptSpec,
) -> Result<SummaryRecord, InferenceError> {
    generate_with_log(endpoint, prompt, &mut |_| {})
}

/// [`generate_summary`], reporting every attempt to `log`.
pub fn generate_with_log(
    endpoint: &LlmEndpoint,
    prompt: &PromptSpec,
    log: &mut dyn FnMut(AttemptLog),
) -> Result<SummaryRecord, InferenceError> {
    endpoint.validate()?;
    if prompt.prompt_text.trim().is_empty() {
        return Err(InferenceError::EmptyPrompt);
    }
    let token = if endpoint.auth_token_env.is_empty() {
        None
    } else {
        Some(
            std::env::var(&endpoint.auth_token_env)
                .map_err(|_| InferenceError::MissingToken(endpoint.auth_token_env.clone()))?,
        )
    };
    let strip = endpoint
        .strip_reasoning
        .as_deref()
        .map(|r| Regex::new(r).expect("validated"));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(endpoint.timeout_seconds)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = build_request_body(endpoint, prompt);
    let url = endpoint.url();
    let started_at = Utc::now();

    let mut attempt = 0;
    loop {
        attempt += 1;
        let t0 = Instant::now();
        let mut request = agent.post(&url);
        if let Some(token) = &token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let (status, outcome) = match request.send_json(&body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string();
                let outcome = match text {
                    Err(ureq::Error::Timeout(_)) => {
                        Attempt::Retryable(InferenceError::Timeout { attempts: attempt })
                    }
                    Err(e) => Attempt::Fatal(InferenceError::Transport(e.to_string())),
                    Ok(text) if (500..600).contains(&status) => {
                        let _ = text;
                        Attempt::Retryable(InferenceError::TransientFailure {
                            status,
                            attempts: attempt,
                        })
                    }
                    Ok(text) if !(200..300).contains(&status) => {
                        Attempt::Fatal(InferenceError::HttpStatus {
                            status,
                            body: truncate(&text, 500),
                        })
                    }
                    Ok(text) => match serde_json::from_str::<Value>(&text) {
                        Err(_) => Attempt::Fatal(InferenceError::Malformed(truncate(&text, 200))),
                        Ok(v) => match parse_completion(&v, endpoint.raw_text_completion) {
                            Ok((text, finish)) => Attempt::Done(text, finish),
                            Err(e) => Attempt::Fatal(e),
                        },
                    },
                };
                (Some(status), outcome)
            }
            Err(ureq::Error::Timeout(_)) => (
                None,
                Attempt::Retryable(InferenceError::Timeout { attempts: attempt }),
            ),
            Err(e) => (
                None,
                Attempt::Fatal(InferenceError::Transport(e.to_string())),
            ),
        };
        let mut entry = AttemptLog {
            paper_id: prompt.source_id.clone(),
            llm_id: endpoint.llm_id.clone(),
            method: prompt.method,
            attempt,
            status,
            elapsed_ms: t0.elapsed().as_millis() as u64,
            outcome: "ok".into(),
            finish_reason: None,
        };
        match outcome {
            Attempt::Done(raw_text, finish_reason) => {
                let text = match &strip {
                    Some(re) => strip_leading(&raw_text, re),
                    None => raw_text,
                };
                if text.trim().is_empty() {
                    entry.outcome = InferenceError::EmptyCompletion.kind().into();
                    log(entry);
                    return Err(InferenceError::EmptyCompletion);
                }
                entry.finish_reason = finish_reason.clone();
                log(entry);
                return Ok(SummaryRecord {
                    paper_id: prompt.source_id.clone(),
                    llm_id: endpoint.llm_id.clone(),
                    method: prompt.method,
                    prompt_text: prompt.prompt_text.clone(),
                    summary_text: text,
                    started_at,
                    finished_at: Utc::now(),
                    attempt_count: attempt,
                    finish_reason,
                });
            }
            Attempt::Fatal(e) => {
                entry.outcome = e.kind().into();
                log(entry);
                return Err(e);
            }
            Attempt::Retryable(e) => {
                entry.outcome = e.kind().into();
                log(entry);
                if attempt > endpoint.max_retries {
                    return Err(e);
                }
                std::thread::sleep(endpoint.retry_delay(attempt - 1));
            }
        }
    }
}

/// The first `n_sentences` sentences of the prompt's abstract, verbatim,
/// followed by the first sentence of any appended context when the summary
/// does not already contain it. Needs no network and is deterministic apart
/// from timestamps.
pub fn mock_generate(prompt: &PromptSpec, n_sentences: usize, llm_id: &str) -> SummaryRecord {
    let started_at = Utc::now();
    let text = prompt.abstract_text();
    let summary_text = match segment_sentences(text) {
        Ok(split) => {
            let n = n_sentences.clamp(1, split.len());
            let (start, end) = (split.sentences[0].start, split.sentences[n - 1].end);
            text.chars().skip(start).take(end - start).collect()
        }
        Err(_) => text.to_string(),
    };
    let context = prompt.prompt_text[prompt.abstract_range.end..].trim();
    let summary_text = match segment_sentences(context) {
        Ok(split) if !split.is_empty() && !summary_text.contains(&split.sentences[0].text) => {
            format!("{summary_text} {}", split.sentences[0].text)
        }
        _ => summary_text,
    };
    SummaryRecord {
        paper_id: prompt.source_id.clone(),
        llm_id: llm_id.to_string(),
        method: prompt.method,
        prompt_text: prompt.prompt_text.clone(),
        summary_text,
        started_at,
        finished_at: Utc::now(),
        attempt_count: 1,
        finish_reason: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AbstractDoc;
    use crate::prompting::build_prompt;

    fn prompt(text: &str) -> PromptSpec {
        build_prompt(
            PromptMethod::Baseline,
            &AbstractDoc::new("p", "t", text),
            None,
        )
        .unwrap()
    }

    #[test]
    fn mock_truncates_and_clamps() {
        let p = prompt("A. B. C.");
        assert_eq!(mock_generate(&p, 2, "m").summary_text, "A. B.");
        assert_eq!(mock_generate(&p, 10, "m").summary_text, "A. B. C.");
        let a = mock_generate(&p, 1, "m");
        let b = mock_generate(&p, 1, "m");
        assert_eq!(
            (a.summary_text, a.prompt_text, a.attempt_count),
            (b.summary_text, b.prompt_text, b.attempt_count)
        );
    }

    #[test]
    fn mock_echoes_new_context() {
        let doc = AbstractDoc::new("p", "t", "A. B. C.");
        let sel = crate::prompting::SentenceSelection {
            source_id: "p".into(),
            k: 1,
            key_indices: vec![2],
            key_ranked: vec![2],
            random_indices: vec![],
            seed: 0,
        };
        let p = build_prompt(
            PromptMethod::Cr(crate::prompting::KeyCount::One),
            &doc,
            Some(&sel),
        )
        .unwrap();
        assert_eq!(mock_generate(&p, 1, "m").summary_text, "A. C.");
        assert_eq!(mock_generate(&p, 3, "m").summary_text, "A. B. C.");
    }

    #[test]
    fn request_body_has_no_sampling_overrides() {
        let p = prompt("A. B.");
        for raw in [false, true] {
            let mut ep = LlmEndpoint::new("m", "http://x");
            ep.raw_text_completion = raw;
            let body = build_request_body(&ep, &p).to_string();
            for key in SAMPLING_KEYS {
                assert!(!body.contains(&format!("\"{key}\"")), "{key} in {body}");
            }
            assert!(body.contains("300"));
        }
    }

    #[test]
    fn chat_body_shape() {
        let body = build_request_body(&LlmEndpoint::new("m", "http://x"), &prompt("A."));
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "Summarise: A.");
        assert_eq!(body["max_tokens"], 300);
        assert_eq!(body["model"], "m");
    }

    #[test]
    fn completion_parsing() {
        let v = json!({"choices": [{"message": {"content": "hi"}, "finish_reason": "length"}]});
        assert_eq!(
            parse_completion(&v, false).unwrap(),
            ("hi".into(), Some("length".into()))
        );
        let raw = json!([{"generated_text": "yo"}]);
        assert_eq!(parse_completion(&raw, true).unwrap().0, "yo");
        assert!(parse_completion(&json!({}), false).is_err());
    }

    #[test]
    fn reasoning_strip() {
        let re = Regex::new(r"(?s)^\s*<think>.*?</think>").unwrap();
        assert_eq!(
            strip_leading("<think>x\ny</think>\nAnswer.", &re),
            "Answer."
        );
        assert_eq!(
            strip_leading("Answer <think>z</think>", &re),
            "Answer <think>z</think>"
        );
    }

    #[test]
    fn endpoint_validation() {
        let mut ep = LlmEndpoint::new("m", "http://x");
        assert!(ep.validate().is_ok());
        ep.max_new_tokens = 0;
        assert!(ep.validate().is_err());
        let mut ep = LlmEndpoint::new("m", "http://x");
        ep.strip_reasoning = Some("(".into());
        assert!(ep.validate().is_err());
    }
}

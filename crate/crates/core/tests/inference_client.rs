mod common;

use common::{Reply, Server};
use serde_json::json;
use std::time::Duration;
use sumalign::corpus::AbstractDoc;
use sumalign::inference::{
    generate_summary, generate_with_log, InferenceError, LlmEndpoint, SAMPLING_KEYS,
};
use sumalign::prompting::{build_prompt, PromptMethod, PromptSpec};

fn prompt() -> PromptSpec {
    let doc = AbstractDoc::new("p1", "Title", "We study things. Results are good.");
    build_prompt(PromptMethod::Baseline, &doc, None).unwrap()
}

fn ok_body(text: &str) -> serde_json::Value {
    json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]})
}

fn endpoint(url: &str) -> LlmEndpoint {
    let mut e = LlmEndpoint::new("model-a", url);
    e.retry_base_seconds = 0.0;
    e
}

#[test]
fn request_uses_model_defaults() {
    let server = Server::start(|_, _| Reply::json(200, ok_body("A summary.")));
    let rec = generate_summary(&endpoint(&server.url), &prompt()).unwrap();
    assert_eq!(rec.summary_text, "A summary.");
    assert_eq!(rec.attempt_count, 1);
    assert_eq!(rec.finish_reason.as_deref(), Some("stop"));
    let req = server.request(0);
    assert_eq!(req.path, "/v1/chat/completions");
    let body = req.json();
    assert_eq!(body["model"], "model-a");
    assert_eq!(body["messages"][0]["content"], prompt().prompt_text);
    for key in SAMPLING_KEYS {
        assert!(body.get(key).is_none(), "{key} must not be sent");
    }
    assert!(req.header("authorization").is_none());
}

#[test]
fn bearer_token_comes_from_the_environment() {
    std::env::set_var("SUMALIGN_TEST_TOKEN", "s3cret");
    let server = Server::start(|_, _| Reply::json(200, ok_body("Fine.")));
    let mut e = endpoint(&server.url);
    e.auth_token_env = "SUMALIGN_TEST_TOKEN".into();
    generate_summary(&e, &prompt()).unwrap();
    assert_eq!(
        server.request(0).header("authorization"),
        Some("Bearer s3cret")
    );

    e.auth_token_env = "SUMALIGN_TEST_TOKEN_UNSET".into();
    assert!(matches!(
        generate_summary(&e, &prompt()),
        Err(InferenceError::MissingToken(_))
    ));
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let server = Server::start(|_, i| {
        if i < 2 {
            Reply::json(503, json!({"error": "busy"}))
        } else {
            Reply::json(200, ok_body("Third time."))
        }
    });
    let mut log = Vec::new();
    let rec = generate_with_log(&endpoint(&server.url), &prompt(), &mut |a| log.push(a)).unwrap();
    assert_eq!(rec.attempt_count, 3);
    assert_eq!(server.count(), 3);
    let outcomes: Vec<&str> = log.iter().map(|a| a.outcome.as_str()).collect();
    assert_eq!(outcomes, ["transient_failure", "transient_failure", "ok"]);
    assert_eq!(log[0].status, Some(503));
}

#[test]
fn persistent_server_errors_give_up_after_retries() {
    let server = Server::start(|_, _| Reply::json(500, json!({})));
    match generate_summary(&endpoint(&server.url), &prompt()) {
        Err(InferenceError::TransientFailure {
            status: 500,
            attempts: 4,
        }) => {}
        other => panic!("expected transient failure after 4 attempts, got {other:?}"),
    }
    assert_eq!(server.count(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = Server::start(|_, _| Reply::json(400, json!({"error": "bad request"})));
    match generate_summary(&endpoint(&server.url), &prompt()) {
        Err(InferenceError::HttpStatus { status: 400, body }) => assert!(body.contains("bad")),
        other => panic!("expected HTTP 400, got {other:?}"),
    }
    assert_eq!(server.count(), 1);
}

#[test]
fn empty_completion_is_an_error() {
    let server = Server::start(|_, _| Reply::json(200, ok_body("   ")));
    assert!(matches!(
        generate_summary(&endpoint(&server.url), &prompt()),
        Err(InferenceError::EmptyCompletion)
    ));
}

#[test]
fn malformed_body_is_an_error() {
    let server = Server::start(|_, _| Reply::json(200, json!({"unexpected": true})));
    assert!(matches!(
        generate_summary(&endpoint(&server.url), &prompt()),
        Err(InferenceError::Malformed(_))
    ));
}

#[test]
fn timeouts_are_retried() {
    let server = Server::start(|_, i| Reply {
        status: 200,
        body: ok_body("Late but fine.").to_string(),
        delay: if i == 0 {
            Duration::from_millis(2500)
        } else {
            Duration::ZERO
        },
    });
    let mut e = endpoint(&server.url);
    e.timeout_seconds = 1;
    let rec = generate_summary(&e, &prompt()).unwrap();
    assert_eq!(rec.attempt_count, 2);
}

#[test]
fn raw_text_dialect_and_reasoning_strip() {
    let server = Server::start(|_, _| {
        Reply::json(
            200,
            json!([{"generated_text": "<think>hmm</think> The summary."}]),
        )
    });
    let mut e = endpoint(&server.url);
    e.raw_text_completion = true;
    e.path = "/generate".into();
    e.strip_reasoning = Some("(?s)<think>.*?</think>".into());
    let rec = generate_summary(&e, &prompt()).unwrap();
    assert_eq!(rec.summary_text, "The summary.");
    let body = server.request(0).json();
    assert_eq!(body["inputs"], prompt().prompt_text);
    assert_eq!(body["parameters"]["return_full_text"], false);
}

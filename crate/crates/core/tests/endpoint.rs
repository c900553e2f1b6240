mod common;

use std::collections::HashMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use common::{completion_body, MockServer};
use fc_forge_core::dataset::{load_dataset, DatasetFormat};
use fc_forge_core::inference::{complete, run_inference, EndpointConfig, Model, RunOptions};
use fc_forge_core::metrics::evaluate_dataset;
use fc_forge_core::parsing::ParseOutcome;
use fc_forge_core::{synth, Error};

fn config(url: &str) -> EndpointConfig {
    EndpointConfig {
        api_key: None,
        backoff_base_ms: 5,
        timeout_secs: 5.0,
        ..EndpointConfig::new(url, "mock")
    }
}

#[test]
fn echo_empty_list() {
    let server = MockServer::start(|_, req| {
        assert_eq!(req["model"], "mock");
        assert_eq!(req["messages"][0]["role"], "user");
        assert_eq!(req["temperature"], 0.0);
        (200, completion_body("```\n[]\n```"))
    });
    let c = complete("hello", &config(&server.url)).unwrap();
    assert_eq!(c.text, "```\n[]\n```");
    assert_eq!(c.attempts, 1);
}

#[test]
fn retries_server_errors() {
    let server = MockServer::start(|n, _| match n {
        0 | 1 => (500, "{}".into()),
        _ => (200, completion_body("ok")),
    });
    let c = complete("x", &config(&server.url)).unwrap();
    assert_eq!(c.attempts, 3);
    assert_eq!(server.request_count(), 3);
}

#[test]
fn rate_limit_is_retried_until_budget_runs_out() {
    let server = MockServer::start(|_, _| (429, "{}".into()));
    let cfg = EndpointConfig { max_retries: 2, ..config(&server.url) };
    match complete("x", &cfg) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.request_count(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let server = MockServer::start(|_, _| (401, "{}".into()));
    let err = complete("x", &config(&server.url)).unwrap_err();
    assert!(matches!(err, Error::Auth { status: 401 }));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn client_error_is_fatal() {
    let server = MockServer::start(|_, _| (400, "{\"error\":\"bad\"}".into()));
    assert!(matches!(complete("x", &config(&server.url)), Err(Error::Transport { .. })));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn unreachable_endpoint_becomes_per_instance_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let cfg = EndpointConfig { max_retries: 1, ..config(&url) };
    let data = synth::probe_corpus(2, 3, 0);
    let recs = run_inference(&data, &Model::Endpoint(cfg), &RunOptions::default(), None).unwrap();
    for r in &recs {
        assert!(r.transport_error.is_some());
        assert!(r.outcome.is_parse_error());
        assert_eq!(r.attempt_count, 2);
    }
}

#[test]
fn in_flight_requests_are_bounded() {
    let server = MockServer::start(|_, _| {
        thread::sleep(Duration::from_millis(40));
        (200, completion_body("[]"))
    });
    let cfg = EndpointConfig { max_in_flight: 3, ..config(&server.url) };
    let data = synth::probe_corpus(12, 3, 0);
    let recs = run_inference(&data, &Model::Endpoint(cfg), &RunOptions::default(), None).unwrap();
    assert_eq!(recs.len(), 12);
    assert!(recs.iter().zip(&data).all(|(r, i)| r.id == i.id));
    let peak = server.peak_in_flight.load(std::sync::atomic::Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak {peak}");
    assert!(recs.iter().all(|r| r.outcome == ParseOutcome::Empty));
}

#[test]
fn weather_example_round_trip() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/weather_example.jsonl");
    let insts = load_dataset(&path, DatasetFormat::Canonical, true).unwrap().instances;
    let golden_prompt = std::fs::read_to_string(path.with_file_name("weather_example.prompt.txt")).unwrap();
    let output = std::fs::read_to_string(path.with_file_name("weather_example.output.txt")).unwrap();
    let server = MockServer::start(move |_, req| {
        assert_eq!(req["messages"][0]["content"], golden_prompt.as_str());
        (200, completion_body(&output))
    });
    let recs = run_inference(&insts, &Model::Endpoint(config(&server.url)), &RunOptions::default(), None).unwrap();
    let preds: HashMap<_, _> = recs.into_iter().map(|r| (r.id, r.outcome)).collect();
    let report = evaluate_dataset(&preds, &insts).unwrap();
    assert_eq!((report.f1_name, report.f1_full, report.ast_accuracy), (1.0, 1.0, 1.0));
}

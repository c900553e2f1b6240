//! End-to-end scoring: a hand-scored ten-instance fixture and invariance
//! of the evaluation pipeline under test-time masking.

use std::collections::HashMap;
use std::path::Path;

use fc_forge_core::dataset::{load_dataset, to_jsonl, DatasetFormat};
use fc_forge_core::inference::{replay, run_inference, BuiltinKind, Model, RunOptions};
use fc_forge_core::metrics::{degradation_report, evaluate_dataset, EvalReport};
use fc_forge_core::parsing::ParseOutcome;
use fc_forge_core::{synth, FunctionSpec, Instance, ParamSpec, TaskKind, ToolCall, ValueType};
use serde_json::json;

fn weather() -> FunctionSpec {
    FunctionSpec::new("get_weather", "Current weather for a city.")
        .with_param(ParamSpec::required("city", "City name.", ValueType::String))
        .with_param(ParamSpec::optional("units", "C or F.", ValueType::String, Some(json!("C"))))
}

fn time() -> FunctionSpec {
    FunctionSpec::new("get_time", "Local time in a zone.").with_param(ParamSpec::required("zone", "Zone id.", ValueType::String))
}

fn add() -> FunctionSpec {
    FunctionSpec::new("add", "Adds two numbers.")
        .with_param(ParamSpec::required("a", "", ValueType::Number))
        .with_param(ParamSpec::required("b", "", ValueType::Number))
}

fn w(city: &str) -> ToolCall {
    ToolCall::new("get_weather").with_arg("city", json!(city))
}

fn sum(a: serde_json::Value, b: serde_json::Value) -> ToolCall {
    ToolCall::new("add").with_arg("a", a).with_arg("b", b)
}

fn inst(id: &str, candidates: Vec<FunctionSpec>, gold: Vec<ToolCall>) -> Instance {
    Instance {
        id: id.into(),
        query: format!("query {id}"),
        candidates,
        gold_calls: gold,
    }
}

fn calls(c: Vec<ToolCall>) -> ParseOutcome {
    ParseOutcome::from_calls(c)
}

#[test]
fn hand_scored_fixture() {
    let data = vec![
        inst("1", vec![weather()], vec![w("Paris")]),
        inst("2", vec![weather()], vec![w("Rome")]),
        inst("3", vec![weather(), time()], vec![ToolCall::new("get_time").with_arg("zone", json!("UTC"))]),
        inst("4", vec![weather(), time()], vec![ToolCall::new("get_time").with_arg("zone", json!("CET"))]),
        inst("5", vec![add()], vec![sum(json!(1.0), json!(2.0)), sum(json!(3.0), json!(4.0))]),
        inst("6", vec![add()], vec![sum(json!(1.0), json!(2.0)), sum(json!(3.0), json!(4.0))]),
        inst("7", vec![weather(), add()], vec![w("Oslo"), sum(json!(1), json!(1))]),
        inst("8", vec![weather(), time()], vec![]),
        inst("9", vec![weather()], vec![]),
        inst("10", vec![time()], vec![]),
    ];
    let preds: HashMap<String, ParseOutcome> = [
        ("1", calls(vec![w("Paris")])),
        ("2", calls(vec![w("Rome").with_arg("units", json!("C"))])),
        ("3", calls(vec![w("UTC")])),
        ("4", ParseOutcome::error("no JSON array found")),
        ("5", calls(vec![sum(json!(1), json!(2))])),
        ("6", calls(vec![sum(json!(3), json!(4)), sum(json!(1), json!(2))])),
        ("7", calls(vec![w("Oslo"), sum(json!(1), json!(1)), w("Bergen")])),
        ("8", ParseOutcome::Empty),
        ("9", calls(vec![w("X")])),
        ("10", ParseOutcome::error("invalid JSON in code fence")),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let r = evaluate_dataset(&preds, &data).unwrap();
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} != {b}");
    assert_eq!((r.n_instances, r.n_relevant, r.n_irrelevance, r.n_parse_errors), (10, 7, 3, 2));
    assert_eq!((r.name_counts.tp, r.name_counts.fp, r.name_counts.fn_), (7, 2, 3));
    assert_eq!((r.full_counts.tp, r.full_counts.fp, r.full_counts.fn_), (6, 3, 4));
    close(r.f1_name, 14.0 / 19.0);
    close(r.f1_full, 12.0 / 19.0);
    close(r.macro_f1_name, 67.0 / 105.0);
    close(r.macro_f1_full, 52.0 / 105.0);
    close(r.ast_accuracy, 3.0 / 7.0);
    close(r.irrelevance_accuracy, 2.0 / 3.0);
    close(r.relevance_accuracy, 6.0 / 7.0);
    close(r.category_accuracy[&TaskKind::Simple], 1.0);
    close(r.category_accuracy[&TaskKind::Multiple], 0.0);
    close(r.category_accuracy[&TaskKind::Parallel], 0.5);
    close(r.category_accuracy[&TaskKind::ParallelMultiple], 0.0);
    close(r.category_accuracy[&TaskKind::Irrelevance], 2.0 / 3.0);
    close(r.unweighted_category_mean, 13.0 / 30.0);
    let correct: Vec<bool> = r.per_instance.iter().map(|p| p.correct).collect();
    assert_eq!(correct, [true, true, false, false, false, true, false, true, false, true]);
}

fn run(data: &[Instance], kind: BuiltinKind, masked: bool) -> EvalReport {
    let opts = RunOptions {
        mask_at_test: masked,
        seed: 8,
        builtin_workers: 4,
        ..RunOptions::default()
    };
    let recs = run_inference(data, &Model::Builtin(kind), &opts, None).unwrap();
    for r in &recs {
        assert_eq!(replay(r).0, r.outcome);
    }
    let preds = recs.into_iter().map(|r| (r.id, r.outcome)).collect();
    evaluate_dataset(&preds, data).unwrap()
}

fn check_fractions(r: &EvalReport) {
    for (name, v) in r.metrics() {
        assert!((0.0..=1.0).contains(&v), "{name} = {v}");
    }
    assert_eq!(r.per_instance.len(), r.n_instances);
    assert_eq!(r.f1_name, r.name_counts.f1());
    assert_eq!(r.f1_full, r.full_counts.f1());
}

#[test]
fn oracle_is_perfect_and_mask_invariant_on_random_data() {
    for seed in 0..5 {
        let data = synth::dataset(150, seed);
        let plain = run(&data, BuiltinKind::Oracle, false);
        let masked = run(&data, BuiltinKind::Oracle, true);
        assert_eq!(plain, masked);
        assert_eq!((plain.f1_name, plain.f1_full, plain.ast_accuracy), (1.0, 1.0, 1.0));
        assert_eq!(plain.irrelevance_accuracy, if plain.n_irrelevance > 0 { 1.0 } else { 0.0 });
        check_fractions(&plain);
    }
}

#[test]
fn desc_match_is_mask_invariant_and_name_bias_is_not() {
    let data = synth::probe_corpus(100, 5, 3);
    let d = degradation_report(&run(&data, BuiltinKind::DescMatch, false), &run(&data, BuiltinKind::DescMatch, true)).unwrap();
    assert!(d.deltas.iter().all(|m| m.absolute == 0.0));
    let n = degradation_report(&run(&data, BuiltinKind::NameBias, false), &run(&data, BuiltinKind::NameBias, true)).unwrap();
    assert!(n.get("f1_name").unwrap().absolute < -0.5);
}

#[test]
fn random_predictions_stay_in_range() {
    let data = synth::dataset(200, 77);
    for kind in [BuiltinKind::NameBias, BuiltinKind::DescMatch] {
        check_fractions(&run(&data, kind, false));
    }
}

fn mixed_fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mixed_200.jsonl")
}

/// The bundled 200-instance fixture is exactly the generator's output.
#[test]
fn mixed_fixture_matches_generator() {
    let expected = to_jsonl(&synth::dataset(200, 2024));
    if std::env::var_os("FC_FORGE_REGEN_FIXTURES").is_some() {
        std::fs::write(mixed_fixture(), &expected).unwrap();
    }
    assert_eq!(std::fs::read_to_string(mixed_fixture()).unwrap(), expected);
    let loaded = load_dataset(&mixed_fixture(), DatasetFormat::Canonical, true).unwrap();
    assert_eq!(loaded.instances.len(), 200);
}

/// The bundled probe corpus used by the CLI golden run.
#[test]
fn probe_fixture_matches_generator() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/probe_200.jsonl");
    let expected = to_jsonl(&synth::probe_corpus(200, 5, 5));
    if std::env::var_os("FC_FORGE_REGEN_FIXTURES").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), expected);
}

use std::io::Write;

use modelbelief::belief::extract;
use modelbelief::estimation::RunPool;
use modelbelief::ingest::jsonl::append_run;
use modelbelief::ingest::wire::{DEFAULT_MODEL, LOGPROB_SENTINEL};
use modelbelief::ingest::*;
use modelbelief::study::{default_alternatives, oracle_study, ScenarioGrid, SplitSpec};
use modelbelief::token::SamplingConfig;
use modelbelief::Error;

const FIXTURE: &str = include_str!("fixtures/chat_completion.json");

fn ctx(top_k: usize) -> RunContext {
    RunContext {
        scenario: "p31".into(),
        run_index: 0,
        seed: 0,
        temperature: 1.0,
        top_k,
    }
}

#[test]
fn request_matches_documented_parameterization() {
    let req = build_request(&PromptTemplate::default(), 31.0, &SamplingConfig::default()).unwrap();
    assert!(req.messages[1]
        .content
        .contains("31 cents per Pampers diaper and 30 cents per Huggies diaper"));
    assert!(req.messages[0]
        .content
        .starts_with("You are visiting a store to buy baby diapers."));
    let body = String::from_utf8(req.to_json_bytes()).unwrap();
    let tail =
        r#""logprobs":true,"top_logprobs":20,"max_completion_tokens":200,"temperature":1.0}"#;
    assert!(body.ends_with(tail), "{body}");
    assert!(body.starts_with(&format!(
        r#"{{"model":"{DEFAULT_MODEL}","messages":[{{"role":"system","content":"#
    )));
    let again =
        build_request(&PromptTemplate::default(), 31.0, &SamplingConfig::default()).unwrap();
    assert_eq!(req.to_json_bytes(), again.to_json_bytes());
}

#[test]
fn request_rejects_fractional_prices_and_bad_templates() {
    let t = PromptTemplate::default();
    assert!(matches!(
        build_request(&t, 31.5, &SamplingConfig::default()),
        Err(Error::Domain(_))
    ));
    assert!(PromptTemplate::new("sys", "no slot here").is_err());
    assert!(PromptTemplate::new("sys", "{price} and {price}").is_err());
    let cfg = SamplingConfig {
        top_k_recorded: 21,
        ..SamplingConfig::default()
    };
    assert!(build_request(&t, 31.0, &cfg).is_err());
}

#[test]
fn golden_fixture_parses() {
    let parsed = parse_response(FIXTURE.as_bytes(), &ctx(20)).unwrap();
    let run = &parsed.run;
    assert_eq!(run.tokens.len(), 8);
    assert!(parsed.warnings.is_empty());
    assert_eq!(run.text.as_deref(), Some("I would choose **Pampers**."));
    assert_eq!(run.top_logprobs[7][19].1, f64::NEG_INFINITY);
    assert!(run.top_logprobs.iter().all(|p| p.len() == 20));

    // Belief from the pivot entries, computed by hand from the fixture.
    let alts = default_alternatives();
    let e = extract(run, &alts).unwrap();
    assert_eq!(e.pivot.pivot_index, 4);
    let p = (-0.105f64).exp() + (-7.1f64).exp();
    let h = (-2.4f64).exp() + (-8.3f64).exp();
    let n = (-5.3f64).exp() + (-8.0f64).exp();
    let z = p + h + n;
    for (got, want) in e.belief.values.iter().zip([p / z, h / z, n / z]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn fewer_entries_than_requested_warn() {
    let parsed = parse_response(FIXTURE.as_bytes(), &ctx(20)).unwrap();
    let mut run = parsed.run;
    run.top_logprobs[2].truncate(5);
    let raw = response_to_wire(&run);
    let again = parse_response(&raw, &ctx(20)).unwrap();
    assert_eq!(
        again.warnings,
        vec![ParseWarning::TruncatedTopK {
            position: 2,
            got: 5,
            expected: 20
        }]
    );
    // More than requested is a schema violation.
    assert!(matches!(
        parse_response(FIXTURE.as_bytes(), &ctx(10)),
        Err(Error::Schema(_))
    ));
}

#[test]
fn schema_errors() {
    let empty = br#"{"choices": []}"#;
    assert!(matches!(
        parse_response(empty, &ctx(20)),
        Err(Error::Schema(_))
    ));
    let no_logprobs = br#"{"choices": [{"index": 0, "message": {"role": "assistant", "content": "Pampers"}, "logprobs": null}]}"#;
    assert!(matches!(
        parse_response(no_logprobs, &ctx(20)),
        Err(Error::Schema(_))
    ));
    assert!(matches!(
        parse_response(b"not json", &ctx(20)),
        Err(Error::Schema(_))
    ));
    let positive = br#"{"choices": [{"message": {"content": "x"}, "logprobs": {"content": [{"token": "x", "logprob": 0.5, "top_logprobs": []}]}}]}"#;
    assert!(matches!(
        parse_response(positive, &ctx(20)),
        Err(Error::Schema(_))
    ));
}

#[test]
fn oracle_runs_round_trip_through_the_wire_format() {
    let (lm, data) = oracle_study(
        &ScenarioGrid::default(),
        &SplitSpec::default(),
        1,
        &SamplingConfig::default(),
    )
    .unwrap();
    for s in data.scenarios() {
        let sampler = lm.sampler(&s.id, &SamplingConfig::default()).unwrap();
        for r in 0..20 {
            let run = sampler.generate(r);
            let c = RunContext {
                scenario: run.scenario.clone(),
                run_index: run.run_index,
                seed: run.seed,
                temperature: run.temperature,
                top_k: 20,
            };
            let parsed = parse_response(&response_to_wire(&run), &c).unwrap();
            assert_eq!(parsed.run, run);
            assert!(parsed.warnings.is_empty());
        }
    }
    let raw = String::from_utf8(response_to_wire(
        &lm.sampler(&data.test[0].id, &SamplingConfig::default())
            .unwrap()
            .generate(0),
    ))
    .unwrap();
    // Zero-probability padding goes out as the endpoint's sentinel.
    assert!(raw.contains(&format!("{LOGPROB_SENTINEL:?}")));
}

#[test]
fn pool_round_trip_on_sixteen_thousand_records() {
    let (_, data) = oracle_study(
        &ScenarioGrid::default(),
        &SplitSpec::default(),
        1000,
        &SamplingConfig::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.jsonl");
    assert_eq!(persist_pool(&data.pool, &path).unwrap(), 16_000);
    let back = load_pool(&path).unwrap();
    assert_eq!(back, data.pool);

    let bytes = std::fs::read(&path).unwrap();
    persist_pool(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn runs_round_trip_with_zero_probabilities() {
    let (lm, data) = oracle_study(
        &ScenarioGrid::default(),
        &SplitSpec::default(),
        1,
        &SamplingConfig::default(),
    )
    .unwrap();
    let sampler = lm
        .sampler(&data.train[0].id, &SamplingConfig::default())
        .unwrap();
    let mut runs: Vec<_> = (0..50).map(|r| sampler.generate(r)).collect();
    runs[3].text = Some("free text".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    assert_eq!(persist_runs(&runs, &path).unwrap(), 50);
    assert_eq!(load_runs(&path).unwrap(), runs);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(r#"{"v":1,"scenario":"p25","run":0,"tokens":["#));
    // Padding tokens have zero probability and are stored as null.
    assert!(text.contains("null]"));

    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap();
    append_run(&runs[0], &mut f).unwrap();
    f.flush().unwrap();
    assert_eq!(load_runs(&path).unwrap().len(), 51);
}

#[test]
fn empty_corrupt_and_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(load_pool(&empty).unwrap().is_empty());
    assert!(load_runs(&empty).unwrap().is_empty());

    let (_, data) = oracle_study(
        &ScenarioGrid::default(),
        &SplitSpec::default(),
        2,
        &SamplingConfig::default(),
    )
    .unwrap();
    let path = dir.path().join("pool.jsonl");
    persist_pool(&data.pool, &path).unwrap();
    let mut lines: Vec<String> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[5] = r#"{"v":1,"scenario":"p27","run":"#.to_owned();
    std::fs::write(&path, lines.join("\n")).unwrap();
    match load_pool(&path) {
        Err(Error::CorruptLine { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected corrupt line, got {other:?}"),
    }

    lines[5] = r#"{"v":2,"scenario":"p27"}"#.to_owned();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let err = load_pool(&path).unwrap_err();
    assert!(matches!(
        err,
        Error::VersionMismatch {
            found: 2,
            expected: 1
        }
    ));
    let msg = err.to_string();
    assert!(msg.contains('2') && msg.contains('1'), "{msg}");
}

#[test]
fn headerless_pool_infers_alternatives() {
    let (_, data) = oracle_study(
        &ScenarioGrid::default(),
        &SplitSpec::default(),
        3,
        &SamplingConfig::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_pool(&data.pool, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let body: Vec<&str> = text.lines().skip(1).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    std::fs::write(&path, body.join("\n") + "\n").unwrap();
    let back: RunPool = load_pool(&path).unwrap();
    assert_eq!(back.alternatives(), data.pool.alternatives());
    assert_eq!(
        back.iter().collect::<Vec<_>>(),
        data.pool.iter().collect::<Vec<_>>()
    );
}

use std::fs;
use std::path::Path;

use modelbelief::cli::run_command;

fn run(args: &[&str], out: &Path) -> i32 {
    let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    argv.push("--out".into());
    argv.push(out.display().to_string());
    run_command(argv)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run_command(["--help"]), 0);
    assert_eq!(run_command(["bootstrap", "--help"]), 0);
    assert_eq!(run_command(["bootstrap", "--measure", "prices"]), 2);
    assert_eq!(run_command(["no-such-command"]), 2);
    assert_eq!(run_command(Vec::<String>::new()), 2);
}

#[test]
fn offline_fetch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["fetch", "--offline"], dir.path()), 2);
}

#[test]
fn missing_pool_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    assert_eq!(
        run(
            &["estimate", "--pool", missing.to_str().unwrap()],
            &dir.path().join("o")
        ),
        1
    );
}

#[test]
fn bootstrap_writes_table_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "bootstrap",
        "--runs",
        "1",
        "--draws",
        "200",
        "--measure",
        "both",
        "--seed",
        "7",
        "--pool-runs",
        "200",
    ];
    let out = dir.path().join("b");
    assert_eq!(run(&args, &out), 0);
    let table = fs::read(out.join("table2.csv")).unwrap();
    let manifest = fs::read(out.join("manifest.json")).unwrap();
    assert_eq!(String::from_utf8_lossy(&table).lines().count(), 5);
    assert_eq!(run(&args, &out), 0);
    assert_eq!(fs::read(out.join("table2.csv")).unwrap(), table);
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);

    let m: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"], serde_json::json!(["table2.csv"]));
}

#[test]
fn simulate_then_extract_and_estimate_from_the_pool() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(
        run(
            &["simulate", "--runs", "20", "--save-runs", "--seed", "3"],
            &sim
        ),
        0
    );
    for f in [
        "pool.jsonl",
        "runs.jsonl",
        "estimates.csv",
        "figure1.csv",
        "oracle.json",
        "manifest.json",
    ] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let ext = dir.path().join("ext");
    let runs = sim.join("runs.jsonl");
    assert_eq!(
        run(&["extract", "--runs-file", runs.to_str().unwrap()], &ext),
        0
    );
    assert_eq!(
        fs::read(ext.join("pool.jsonl")).unwrap(),
        fs::read(sim.join("pool.jsonl")).unwrap()
    );
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(ext.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["inputs"].as_object().unwrap().len(), 1);

    let est = dir.path().join("est");
    let pool = sim.join("pool.jsonl");
    assert_eq!(
        run(&["estimate", "--pool", pool.to_str().unwrap()], &est),
        0
    );
    let fits: serde_json::Value =
        serde_json::from_slice(&fs::read(est.join("fits.json")).unwrap()).unwrap();
    assert_eq!(fits.as_array().unwrap().len(), 2);
}

#[test]
fn sweep_and_accuracy_commands() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    assert_eq!(
        run(&["temp-sweep", "--runs", "30", "--temperatures", "0,1"], &t),
        0
    );
    assert_eq!(
        fs::read_to_string(t.join("figure4.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
    assert_eq!(run(&["temp-sweep", "--price", "99"], &t), 2);

    let a = dir.path().join("a");
    let args = [
        "accuracy-curve",
        "--pool-runs",
        "50",
        "--draws",
        "20",
        "--grid",
        "1,5",
        "--truth-beta",
        "-0.45",
    ];
    assert_eq!(run(&args, &a), 0);
    assert_eq!(
        fs::read_to_string(a.join("figure3.csv"))
            .unwrap()
            .lines()
            .count(),
        9
    );
}

mod common;

use common::*;
use serde_json::{json, Value};

#[test]
fn ingest_reports_partitions_and_reuses_cache() {
    let ws = Workspace::new();
    let kb_path = ws.path("kb.jsonl");
    write_jsonl(&kb_path, &kb(3));
    let first = ws.run(&["ingest", "kb.jsonl"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("partitions: sarcastic=3 non_sarcastic=3"), "{text}");
    assert!(text.contains("6 new embeddings"), "{text}");

    let again = stdout(&ws.run(&["ingest", "kb.jsonl"]));
    assert!(again.contains("0 new embeddings"), "{again}");
    assert!(ws.cache().join("index.jsonl").exists());
}

#[test]
fn ingest_rejects_bad_labels_with_line_numbers() {
    let ws = Workspace::new();
    let path = ws.path("bad.jsonl");
    let mut rows = kb(2);
    rows.push(json!({ "text": "hmm", "label": 2 }));
    rows.push(json!({ "text": "", "label": 1 }));
    write_jsonl(&path, &rows);
    let out = ws.run(&["ingest", "bad.jsonl"]);
    assert_eq!(code(&out), 6);
    let err = stderr(&out);
    assert!(err.contains("line 5") && err.contains("line 6"), "{err}");
    assert!(!ws.cache().join("index.jsonl").exists());
}

#[test]
fn classify_prints_verdict_json() {
    let ws = Workspace::new();
    ws.ingest(3);
    let out = ws.run(&["classify", "What a treat, the printer jammed again MOCK_LABEL=1 MOCK_CONF=0.9"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["label"], 1);
    assert_eq!(v["probability"], 0.9);
    assert_eq!(v["retrieved"].as_array().unwrap().len(), 6);
    assert!(v.get("trace").is_none());
    for agent in v["agents"].as_array().unwrap() {
        assert!(agent.get("content").is_none());
    }
}

#[test]
fn classify_trace_matches_golden() {
    let ws = Workspace::new();
    ws.ingest(3);
    let out = ws.run(&[
        "--trace",
        "--seed",
        "5",
        "classify",
        "Love how the bus is late again MOCK_PLAN=EV MOCK_PLAN_CONF=0.9",
        "--context",
        "We have an exam at eight.",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let actual = stdout(&out);
    let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/classify_trace.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&golden).expect("golden file; set UPDATE_GOLDEN=1 to create");
    assert_eq!(actual, expected);

    let v: Value = serde_json::from_str(&actual).unwrap();
    assert_eq!(v["agents"].as_array().unwrap().len(), 4);
    assert!(v["agents"][0]["content"].is_string());
    assert!(v["trace"]["contextual_analysis"].is_string());
}

#[test]
fn missing_index_has_its_own_exit_code() {
    let ws = Workspace::new();
    let out = ws.run(&["classify", "anything"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("ramsd ingest"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_three() {
    let ws = Workspace::new();
    ws.ingest(3);
    // Remote backend without its key variable.
    let out = ws.run_env(
        &["--backend", "remote", "classify", "x"],
        &[("RAMSD_API_KEY_ENV", "RAMSD_TEST_UNSET_KEY_VAR"), ("RAMSD_EMBEDDER", "hashing")],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("RAMSD_TEST_UNSET_KEY_VAR"));

    std::fs::write(ws.path("c.toml"), "api_key = \"sk-secret\"\n").unwrap();
    let out = ws.run(&["--config", "c.toml", "classify", "x"]);
    assert_eq!(code(&out), 3);
    assert!(!stderr(&out).contains("sk-secret"));

    let out = ws.run(&["--k", "0", "classify", "x"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn usage_errors_exit_two() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["classify"])), 2);
    assert_eq!(code(&ws.run(&["frobnicate"])), 2);
    ws.ingest(3);
    write_jsonl(&ws.path("d.jsonl"), &echo_dataset(4));
    assert_eq!(code(&ws.run(&["sweep-k", "d.jsonl", "--k-min", "5", "--k-max", "2"])), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let ws = Workspace::new();
    ws.ingest(6);
    std::fs::write(ws.path("c.toml"), "[pipeline]\nk = 5\n").unwrap();
    let run = |args: &[&str]| -> Value {
        let out = ws.run(args);
        assert!(out.status.success(), "{}", stderr(&out));
        serde_json::from_str(&stdout(&out)).unwrap()
    };
    let v = run(&["--config", "c.toml", "classify", "hello"]);
    assert_eq!(v["retrieved"].as_array().unwrap().len(), 10);
    let v = run(&["--config", "c.toml", "--k", "2", "classify", "hello"]);
    assert_eq!(v["retrieved"].as_array().unwrap().len(), 4);
    let out = ws.run_env(&["--config", "c.toml", "classify", "hello"], &[("RAMSD_K", "1")]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["retrieved"].as_array().unwrap().len(), 2);
}

#[test]
fn evaluate_writes_reports() {
    let ws = Workspace::new();
    ws.ingest(4);
    write_jsonl(&ws.path("d.jsonl"), &echo_dataset(20));
    let out = ws.run(&["evaluate", "d.jsonl", "--out", "run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("macro_f1: 1.0000"), "{text}");
    assert!(text.contains("accuracy: 1.0000"), "{text}");

    let verdicts = std::fs::read_to_string(ws.path("run/verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 20);
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(ws.path("run/metrics.json")).unwrap()).unwrap();
    let dist = metrics["metrics"]["plan_distribution"].as_object().unwrap();
    assert_eq!(dist.values().map(|v| v.as_u64().unwrap()).sum::<u64>(), 20);
    assert_eq!(metrics["metrics"]["confusion"]["tp"], 7);
    assert_eq!(metrics["config"]["backend"], "mock");
    let raw = std::fs::read_to_string(ws.path("run/metrics.json")).unwrap();
    assert!(raw.lines().nth(1).unwrap().trim_start().starts_with("\"generated_at\""));

    let again = ws.run(&["evaluate", "d.jsonl", "--out", "run"]);
    assert_eq!(code(&again), 7);
    assert!(stderr(&again).contains("--force"));
    assert!(ws.run(&["--force", "evaluate", "d.jsonl", "--out", "run"]).status.success());
}

#[test]
fn evaluate_needs_gold_labels() {
    let ws = Workspace::new();
    ws.ingest(3);
    write_jsonl(&ws.path("d.jsonl"), &[json!({ "text": "no label here" })]);
    assert_eq!(code(&ws.run(&["evaluate", "d.jsonl", "--out", "run"])), 6);
}

#[test]
fn sweep_single_k_matches_evaluate() {
    let ws = Workspace::new();
    ws.ingest(4);
    write_jsonl(&ws.path("d.jsonl"), &echo_dataset(9));
    let out = ws.run(&["sweep-k", "d.jsonl", "--k-min", "3", "--k-max", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,accuracy,macro_f1");
    assert_eq!(lines.len(), 2);

    let other = Workspace::new();
    other.ingest(4);
    write_jsonl(&other.path("d.jsonl"), &echo_dataset(9));
    assert!(other.run(&["--k", "3", "evaluate", "d.jsonl", "--out", "r"]).status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(other.path("r/metrics.json")).unwrap()).unwrap();
    let expected = format!(
        "3,{},{}",
        m["metrics"]["accuracy"].as_f64().unwrap(),
        m["metrics"]["macro_f1"].as_f64().unwrap()
    );
    assert_eq!(lines[1], expected);

    let out = ws.run(&["sweep-k", "d.jsonl", "--k-min", "1", "--k-max", "2", "--out", "s.csv"]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(ws.path("s.csv")).unwrap().lines().count(), 3);
    assert_eq!(code(&ws.run(&["sweep-k", "d.jsonl", "--k-max", "2", "--out", "s.csv"])), 7);
}

fn timing_line(t: [f64; 4]) -> String {
    json!({ "id": "x", "timings": {
        "retrieval_ms": t[0], "planning_ms": t[1], "agents_ms": t[2], "synthesis_ms": t[3],
        "total_ms": t.iter().sum::<f64>()
    }})
    .to_string()
}

#[test]
fn timings_table_and_json() {
    let ws = Workspace::new();
    std::fs::write(
        ws.path("v.jsonl"),
        format!("{}\n{}\n", timing_line([100.0, 0.0, 300.0, 0.0]), timing_line([300.0, 200.0, 100.0, 0.0])),
    )
    .unwrap();
    let out = ws.run(&["timings", "v.jsonl"]);
    assert!(out.status.success());
    let table = stdout(&out);
    assert!(table.starts_with("samples: 2\n"), "{table}");
    assert!(table.lines().any(|l| l.starts_with("retrieval") && l.contains("200.000") && l.ends_with("40.000")));

    let out = ws.run(&["timings", "v.jsonl", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["total_ms"], 500.0);
    assert_eq!(v["stages"][2]["stage"], "agents");
    assert_eq!(v["stages"][2]["percent"], 40.0);

    std::fs::write(ws.path("empty.jsonl"), "").unwrap();
    assert_eq!(code(&ws.run(&["timings", "empty.jsonl"])), 6);
    assert_eq!(code(&ws.run(&["timings", "absent.jsonl"])), 6);
}

#[test]
fn timings_reads_evaluate_output() {
    let ws = Workspace::new();
    ws.ingest(3);
    write_jsonl(&ws.path("d.jsonl"), &echo_dataset(5));
    assert!(ws.run(&["evaluate", "d.jsonl", "--out", "run"]).status.success());
    let out = ws.run(&["timings", "run/verdicts.jsonl", "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["samples"], 5);
    let pct: f64 = v["stages"].as_array().unwrap().iter().map(|s| s["percent"].as_f64().unwrap()).sum();
    assert!((pct - 100.0).abs() <= 0.1);
}

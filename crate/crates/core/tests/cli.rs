mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bin, data_dir, TOKEN};
use medaide::gateway::{spawn, BackendConfig, Client, RebuildRequest};
use medaide::rag::Citation;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("MEDAIDE_TOKEN").output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_fixture_report_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let csv = data_dir().join("diseases_sample.csv");
    let v = json_of(&run(&["--json", "ingest", p(&csv), "--out", p(&out), "--source-tag", "kaggle_disease"]));
    assert_eq!(v["report"]["kept"], 1);
    assert_eq!(v["report"]["dropped_incomplete"], 1);
    assert_eq!(v["report"]["dropped_deleted"], 1);
    assert_eq!(v["report"]["dropped_duplicate"], 0);
    assert_eq!(v["report"]["dropped_pii_scrubbed"], 1);

    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    let rec: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(
        rec["instruction"],
        "What are the symptoms, reasons, tests and procedures, and common medications for Panic disorder?"
    );
    assert_eq!(rec["source_tag"], "kaggle_disease");
    let kaggle = v["stats"]["sources"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["source_tag"] == "kaggle_disease")
        .unwrap();
    assert_eq!(kaggle["count"], 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "Disease,Symptoms\nFlu,fever\nCold,\"cough\n").unwrap();
    let out = run(&["ingest", p(&bad), "--out", p(&dir.path().join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv") && err.contains("row 3"), "{err}");

    let out = run(&["ingest", p(&dir.path().join("missing.csv")), "--out", p(&dir.path().join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["query", "--index", p(&dir.path().join("none.maix")), "x"]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = dir.path().join("garbage.maix");
    std::fs::write(&garbage, b"not an index").unwrap();
    std::fs::write(dir.path().join("garbage.chunks.jsonl"), b"").unwrap();
    let out = run(&["query", "--index", p(&garbage), "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn select_without_feasible_model_lists_violations() {
    let out = run(&[
        "select",
        "--profile",
        p(&data_dir().join("profiles/jetson-8gb.json")),
        "--catalog",
        p(&data_dir().join("catalog-q4-only.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("no feasible model"));
    assert_eq!(stdout.matches("Q4_UNSUPPORTED").count(), 3);

    let v = json_of(&run(&[
        "--json",
        "select",
        "--profile",
        p(&data_dir().join("profiles/consumer-gpu-16gb.json")),
        "--catalog",
        p(&data_dir().join("catalog.json")),
        "--mode",
        "accuracy",
    ]));
    assert_eq!(v["chosen"]["name"], "LLaMa2-7B");
}

#[test]
fn build_query_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("kb.maix");
    let v = json_of(&run(&["--json", "build-index", "--docs", p(&data_dir().join("docs")), "--out", p(&index), "--scheme", "q8"]));
    assert_eq!(v["count"], 7);
    assert_eq!(v["scheme"], "q8");
    assert!(dir.path().join("kb.chunks.jsonl").exists());

    let v = json_of(&run(&["--json", "query", "--index", p(&index), "wheezing and inhaled corticosteroids"]));
    assert_eq!(v["k"], 2);
    assert_eq!(v["citations"][0]["doc_id"], "asthma.txt");

    let queries = dir.path().join("q.txt");
    std::fs::write(&queries, "aspirin\n\nmigraine aura\n").unwrap();
    let v = json_of(&run(&["--json", "bench", "--index", p(&index), "--queries", p(&queries), "--repetitions", "3"]));
    assert_eq!(v["samples"], 6);
    assert_eq!(v["storage_ratio"], 0.25);
    assert_eq!(v["vector_bytes"], 7 * 384);
    assert!(v["p50_us"].as_f64().unwrap() <= v["p95_us"].as_f64().unwrap());

    let out = run(&["bench", "--index", p(&index), "--queries", p(&queries), "--repetitions", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_query_and_http_chat_cite_the_same_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("kb.maix");
    json_of(&run(&["--json", "build-index", "--docs", p(&data_dir().join("docs")), "--out", p(&index)]));

    let svc = spawn(common::service_config(&dir.path().join("svc"), BackendConfig::Mock)).unwrap();
    let client = Client::new(&svc.base_url(), Some(TOKEN.into())).unwrap();
    client.rebuild(&RebuildRequest::default()).unwrap();
    let session = client.create_session().unwrap();

    for q in ["blood glucose and metformin", "wrist fracture cast", "aspirin reye syndrome children"] {
        let cli: Vec<Citation> =
            serde_json::from_value(json_of(&run(&["--json", "query", "--index", p(&index), q]))["citations"].clone()).unwrap();
        let http = client.chat(&session, q).unwrap().citations;
        assert_eq!(cli, http, "query {q}");
        let ids: Vec<String> = cli.iter().map(|c| c.chunk_id.clone()).collect();
        assert_eq!(ids, common::oracle_nearest_chunks(q, 2, 384));
    }

    // The chat subcommand speaks to the same service.
    let out = Command::new(bin())
        .args(["--json", "chat", "--url", &svc.base_url(), "--session", &session, "asthma action plan"])
        .env("MEDAIDE_TOKEN", TOKEN)
        .output()
        .unwrap();
    let v = json_of(&out);
    assert_eq!(v["reply"]["citations"].as_array().unwrap().len(), 2);

    let out = run(&["chat", "--url", &svc.base_url(), "hello"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("401"));
}

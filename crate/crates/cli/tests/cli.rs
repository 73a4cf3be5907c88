use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use graphwalk_cli::service::{router, ServiceState};
use graphwalk_cli::Config;
use graphwalk_core::agent::read_jsonl;
use graphwalk_core::toolbox::{Toolbox, ToolboxConfig};
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn graphwalk(config: &str, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphwalk"))
        .arg("--config")
        .arg(fixtures().join(config))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn summary(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

#[test]
fn sample_paths_is_seed_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = graphwalk("sports.toml", dir.path(), &["sample-paths", "--n", "100", "--seed", "7"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("paths.jsonl")).unwrap();
    assert!(!read(&a).is_empty());
    assert_eq!(read(&a), read(&b));
}

#[test]
fn synthesize_on_sports_reconciles() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphwalk("sports.toml", dir.path(), &["synthesize", "--n", "30"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = &summary(&out)["counters"];
    let sum = |v: &Value| v.as_object().unwrap().values().map(|x| x.as_u64().unwrap()).sum::<u64>();
    let emitted = c["emitted"].as_u64().unwrap();
    assert!(emitted > 0);
    assert_eq!(emitted + sum(&c["dropped"]) + sum(&c["quarantined"]), c["input"].as_u64().unwrap());

    let trajs = read_jsonl(&std::fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap()).unwrap();
    assert_eq!(trajs.len() as u64, emitted);
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["counters"], *c);
}

#[test]
fn rollout_then_eval_reports_pass_at_k() {
    let dir = tempfile::tempdir().unwrap();
    let questions = fixtures().join("case_study.questions.jsonl");
    let out = graphwalk(
        "case_study.toml",
        dir.path(),
        &["rollout", "--questions", questions.to_str().unwrap(), "--runs", "32"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&out)["trajectories"], 32);

    let rollouts = dir.path().join("rollouts.jsonl");
    let out = graphwalk(
        "case_study.toml",
        dir.path(),
        &["eval", "--trajectories", rollouts.to_str().unwrap(), "--k", "1,8,32"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pass = &summary(&out)["aggregates"]["pass_at_k"];
    for k in ["1", "8", "32"] {
        assert_eq!(pass[k], 1.0, "pass@{k}");
    }
    assert!(dir.path().join("eval_report.json").exists());
}

#[test]
fn curate_and_contaminate_write_splits() {
    let dir = tempfile::tempdir().unwrap();
    assert!(graphwalk("case_study.toml", dir.path(), &["synthesize"]).status.success());
    let trajs = dir.path().join("trajectories.jsonl");
    let out = graphwalk("case_study.toml", dir.path(), &["curate", "--trajectories", trajs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(summary(&out)["accepted"].as_u64().unwrap() >= 1);

    let test = fixtures().join("case_study.questions.jsonl");
    let out = graphwalk(
        "case_study.toml",
        dir.path(),
        &["contaminate", "--synth", trajs.to_str().unwrap(), "--test", test.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("contamination.md")).unwrap();
    assert!(table.contains("| 0.85 |"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[runtime]\nmax_turn = 10\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_graphwalk"))
        .arg("--config")
        .arg(&bad)
        .arg("load")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_turn"));

    let out = graphwalk("sports.toml", dir.path(), &["eval", "--trajectories", "x.jsonl", "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = graphwalk("sports.toml", dir.path(), &["curate", "--trajectories", "/nonexistent.jsonl"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn print_config_round_trips() {
    let out = Command::new(env!("CARGO_BIN_EXE_graphwalk"))
        .arg("--config")
        .arg(fixtures().join("sports.toml"))
        .arg("--print-config")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = Config::parse(&text).unwrap();
    assert_eq!(parsed.to_toml(), text);
    assert_eq!(parsed.runtime.max_turns, 10);
    assert_eq!(parsed.eval.ks, [1, 8, 32]);
}

#[test]
fn render_sparql_prints_query() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphwalk(
        "sports.toml",
        dir.path(),
        &["render-sparql", "relations_outgoing", "--bind", "entity=m.02mjmr"],
    );
    assert!(out.status.success());
    assert!(summary(&out)["query"].as_str().unwrap().contains("ns:m.02mjmr"));
}

fn service_base(rt: &tokio::runtime::Runtime) -> String {
    let cfg = Config::load(&fixtures().join("case_study.toml")).unwrap();
    let store = cfg.memory_store().unwrap();
    let toolbox = Arc::new(Toolbox::new(Arc::new(store), ToolboxConfig::default()));
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, router(ServiceState::new(toolbox))).await });
    format!("http://{addr}")
}

#[test]
fn service_examples() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let base = service_base(&rt);
    let client = reqwest::blocking::Client::new();

    let health = client.get(format!("{base}/healthz")).send().unwrap();
    assert_eq!(health.status(), 200);
    let health: Value = health.json().unwrap();
    assert!(health["stats"]["triples"].as_u64().unwrap() > 0);

    let rel = client
        .post(format!("{base}/v1/tools/get_relations"))
        .json(&serde_json::json!({"entity": "1946 World Series"}))
        .send()
        .unwrap();
    assert_eq!(rel.status(), 200);
    let rel: Value = rel.json().unwrap();
    let names: Vec<&str> = rel["relations"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(names.contains(&"sports.sports_championship_event.champion"));

    let empty = client
        .post(format!("{base}/v1/tools/get_triples"))
        .json(&serde_json::json!({"entity": "1946 World Series", "relations": []}))
        .send()
        .unwrap();
    assert_eq!(empty.status(), 400);

    let malformed = client
        .post(format!("{base}/v1/resolve"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(malformed.status(), 400);
    let env: Value = malformed.json().unwrap();
    assert_eq!(env["code"], "bad_request");

    let unknown = client
        .post(format!("{base}/v1/resolve"))
        .json(&serde_json::json!({"name": "Atlantis Stadium"}))
        .send()
        .unwrap();
    assert_eq!(unknown.status(), 404);
}

fn check_object(schema: &Value, value: &Value, what: &str) {
    let obj = value.as_object().unwrap_or_else(|| panic!("{what} is not an object"));
    for key in schema["required"].as_array().unwrap() {
        assert!(obj.contains_key(key.as_str().unwrap()), "{what} lacks {key}");
    }
    let props = schema["properties"].as_object().unwrap();
    for key in obj.keys() {
        assert!(props.contains_key(key), "{what} has undocumented field {key}");
    }
}

#[test]
fn shipped_schemas_describe_outputs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let traj_schema: Value = serde_json::from_slice(&std::fs::read(root.join("trajectory.schema.json")).unwrap()).unwrap();
    let svc: Value = serde_json::from_slice(&std::fs::read(root.join("tool_service.schema.json")).unwrap()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    assert!(graphwalk("case_study.toml", dir.path(), &["synthesize"]).status.success());
    let text = std::fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        check_object(&traj_schema, &v, "trajectory");
        for turn in v["turns"].as_array().unwrap() {
            check_object(&traj_schema["$defs"]["turn"], turn, "turn");
        }
    }

    let rt = tokio::runtime::Runtime::new().unwrap();
    let base = service_base(&rt);
    let client = reqwest::blocking::Client::new();
    let post = |path: &str, body: Value| -> Value {
        client.post(format!("{base}{path}")).json(&body).send().unwrap().json().unwrap()
    };
    let defs = &svc["$defs"];
    check_object(
        &defs["RelationQueryResult"],
        &post("/v1/tools/get_relations", serde_json::json!({"entity": "1946 World Series"})),
        "relations",
    );
    check_object(
        &defs["TripleQueryResult"],
        &post(
            "/v1/tools/get_triples",
            serde_json::json!({"entity": "ws1946", "relations": ["sports.sports_championship_event.champion"]}),
        ),
        "triples",
    );
    check_object(&defs["Resolution"], &post("/v1/resolve", serde_json::json!({"name": "Busch Stadium"})), "resolution");
    check_object(&defs["ErrorEnvelope"], &post("/v1/resolve", serde_json::json!({"name": 3})), "envelope");
    let health: Value = client.get(format!("{base}/healthz")).send().unwrap().json().unwrap();
    check_object(&defs["Health"], &health, "health");
}

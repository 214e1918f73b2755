use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use modn::data::{generate_synthetic, Answer, RawValue, SyntheticSpec};
use modn::model::{load_model, LoadOptions, ModelConfig, ModnModel, TrajectoryDump};
use modn::training::{train_from_scratch, TrainConfig};
use modn_service::api::{ApiError, ModelSummary, Predictions, SchemaResponse};
use modn_service::{router, AppState, StateConfig};
use reqwest::StatusCode;
use serde_json::{json, Value};

fn fixture_model(dir: &Path) -> PathBuf {
    let table = generate_synthetic(&SyntheticSpec {
        n_records: 150,
        n_targets: 2,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let config = TrainConfig {
        epochs: 3,
        model: ModelConfig::with_state_dim(8),
        ..Default::default()
    };
    let (model, _) = train_from_scratch(&table, &table, &config, 1).unwrap();
    let path = dir.join("fixture.modn");
    model.save(&path).unwrap();
    path
}

struct Server {
    base: String,
    client: reqwest::Client,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn start(data_dir: &Path) -> Server {
        let state = AppState::open(StateConfig {
            data_dir: Some(data_dir.to_path_buf()),
            ..Default::default()
        })
        .unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(Arc::new(state));
        let handle = tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Server {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
            handle,
        }
    }

    async fn send(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap())
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        self.send(reqwest::Method::GET, path, None).await
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(reqwest::Method::POST, path, Some(body)).await
    }

    async fn delete(&self, path: &str) -> (StatusCode, Value) {
        self.send(reqwest::Method::DELETE, path, None).await
    }

    fn stop(self) {
        self.handle.abort();
    }
}

fn parse<T: serde::de::DeserializeOwned>(v: Value) -> T {
    serde_json::from_value(v).unwrap()
}

fn answers(model: &ModnModel, raw: &[(&str, RawValue)]) -> Vec<Answer> {
    raw.iter()
        .map(|(f, v)| Answer {
            feature_id: f.to_string(),
            value: model.feature(f).unwrap().canonicalize(v).unwrap(),
            group: model.feature(f).unwrap().group,
        })
        .collect()
}

async fn setup() -> (tempfile::TempDir, PathBuf, Server, ModnModel) {
    let dir = tempfile::tempdir().unwrap();
    let model_path = fixture_model(dir.path());
    let server = Server::start(&dir.path().join("service")).await;
    let (status, body) = server
        .post("/models", json!({ "path": model_path, "model_id": "fixture" }))
        .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let model = load_model(&model_path, &LoadOptions::default()).unwrap();
    (dir, model_path, server, model)
}

fn five_answers() -> Vec<(&'static str, RawValue)> {
    vec![
        ("c0", RawValue::Number(0.7)),
        ("b1", RawValue::Bool(true)),
        ("k2", RawValue::Text("L1".into())),
        ("c3", RawValue::Number(-1.25)),
        ("b0", RawValue::Text("no".into())),
    ]
}

#[tokio::test]
async fn registry_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path()).await;
    let (status, body) = server.get("/models").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
    server.stop();

    let (_dir, path, server, model) = setup().await;
    let (_, body) = server.get("/models").await;
    let list: Vec<ModelSummary> = parse(body);
    assert_eq!(list.len(), 1);
    assert_eq!(list[0].fingerprint, model.fingerprint());

    let (status, body) = server.get("/models/fixture/schema").await;
    assert_eq!(status, StatusCode::OK);
    let schema: SchemaResponse = parse(body);
    assert_eq!(schema.features.len(), model.schema().len());
    let k0 = schema.features.iter().find(|f| f.id == "k0").unwrap();
    assert_eq!(k0.levels.as_deref(), Some(&["L0".to_string(), "L1".into(), "L2".into()][..]));
    assert!(schema.remaining.is_none());

    let (status, body) = server.get("/models/nope/schema").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(parse::<ApiError>(body).code, "not_found");

    // Re-registering the same file is idempotent; another file under the same id conflicts.
    let (status, _) = server.post("/models", json!({ "path": path, "model_id": "fixture" })).await;
    assert_eq!(status, StatusCode::CREATED);
    let other = path.with_file_name("other.modn");
    std::fs::copy(&path, &other).unwrap();
    let (status, _) = server.post("/models", json!({ "path": other, "model_id": "fixture" })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = server.post("/models", json!({ "path": "/no/such/file.modn" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    server.stop();
}

#[tokio::test]
async fn session_lifecycle_and_errors() {
    let (_dir, _path, server, model) = setup().await;
    let (status, body) = server.post("/sessions", json!({ "model_id": "fixture" })).await;
    assert_eq!(status, StatusCode::CREATED);
    let created: Predictions = parse(body);
    assert_eq!(created.step, 0);
    assert_eq!(created.probabilities, model.decode_all(&model.initial_state()).unwrap());

    let (_, body) = server.post("/sessions", json!({ "model_id": "fixture" })).await;
    let second: Predictions = parse(body);
    assert_ne!(second.session_id, created.session_id);
    assert_eq!(second.probabilities, created.probabilities);

    let (status, _) = server.post("/sessions", json!({ "model_id": "ghost" })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let sid = &created.session_id;
    let (status, body) = server
        .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": "c0", "value": 0.3 }))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse::<Predictions>(body).step, 1);

    let (status, body) = server
        .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": "c0", "value": 0.9 }))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(parse::<ApiError>(body).code, "conflict");

    let (status, body) = server
        .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": "k0", "value": "L9" }))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ApiError = parse(body);
    assert_eq!(err.code, "invalid_value");
    assert!(err.message.contains("L0, L1, L2"), "{}", err.message);
    assert_eq!(err.detail["levels"], json!(["L0", "L1", "L2"]));

    let (status, body) = server
        .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": "zz", "value": 1 }))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse::<ApiError>(body).code, "unknown_feature");

    let (status, _) = server
        .post("/sessions/missing/answers", json!({ "feature_id": "c0", "value": 1 }))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = server.get("/sessions/missing/trajectory").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, body) = server.get(&format!("/models/fixture/schema?session_id={sid}")).await;
    let schema: SchemaResponse = parse(body);
    let remaining = schema.remaining.unwrap();
    assert_eq!(remaining.len(), model.schema().len() - 1);
    assert!(!remaining.contains(&"c0".to_string()));

    // The other session is untouched.
    let (_, body) = server.get(&format!("/sessions/{}/predictions", second.session_id)).await;
    assert_eq!(parse::<Predictions>(body).probabilities, created.probabilities);

    // Retracting the only answer returns to the initial predictions.
    let (status, body) = server.delete(&format!("/sessions/{sid}/answers/c0")).await;
    assert_eq!(status, StatusCode::OK);
    let back: Predictions = parse(body);
    assert_eq!((back.step, back.probabilities), (0, created.probabilities.clone()));
    let (status, _) = server.delete(&format!("/sessions/{sid}/answers/c0")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, body) = server.get(&format!("/sessions/{sid}/trajectory")).await;
    let dump: TrajectoryDump = parse(body);
    assert_eq!(dump.steps.len(), 1);
    assert_eq!(dump.steps[0].feature_id, "initial");
    assert_eq!(dump.threshold, 0.5);
    server.stop();
}

#[tokio::test]
async fn retraction_replays_remaining_log() {
    let (_dir, _path, server, model) = setup().await;
    let (_, body) = server.post("/sessions", json!({ "model_id": "fixture" })).await;
    let sid = parse::<Predictions>(body).session_id;
    let raw = five_answers();
    let mut last = None;
    for (f, v) in &raw {
        let (_, body) = server
            .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": f, "value": v }))
            .await;
        last = Some(parse::<Predictions>(body));
    }
    let before = last.unwrap();

    // Retract the last answer and resubmit it: identical predictions.
    server.delete(&format!("/sessions/{sid}/answers/b0")).await;
    let (_, body) = server
        .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": "b0", "value": "no" }))
        .await;
    assert_eq!(parse::<Predictions>(body).probabilities, before.probabilities);

    // Retract a middle answer: equal to replaying the rest in order.
    let (_, body) = server.delete(&format!("/sessions/{sid}/answers/k2")).await;
    let after: Predictions = parse(body);
    let rest: Vec<_> = raw.iter().filter(|(f, _)| *f != "k2").cloned().collect();
    let oracle = model.run_answers(&answers(&model, &rest)).unwrap();
    assert_eq!(after.probabilities, oracle.final_probabilities());
    assert_eq!(after.step, 4);
    server.stop();
}

#[tokio::test]
async fn service_cli_and_library_agree_exactly() {
    let (dir, model_path, server, model) = setup().await;
    let (_, body) = server.post("/sessions", json!({ "model_id": "fixture" })).await;
    let sid = parse::<Predictions>(body).session_id;
    let raw = five_answers();
    let mut per_step = Vec::new();
    for (f, v) in &raw {
        let (status, body) = server
            .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": f, "value": v }))
            .await;
        assert_eq!(status, StatusCode::OK);
        per_step.push(parse::<Predictions>(body).probabilities);
    }
    let (_, body) = server.get(&format!("/sessions/{sid}/trajectory")).await;
    let service: TrajectoryDump = parse(body);
    let (_, body) = server.get(&format!("/sessions/{sid}/predictions")).await;
    let live: Predictions = parse(body);

    // Library.
    let library = model.run_answers(&answers(&model, &raw)).unwrap();
    let library_dump = TrajectoryDump::new(&model, &library, 0.5);
    assert_eq!(service, library_dump);
    assert_eq!(service.steps.len(), 6);
    for (k, p) in per_step.iter().enumerate() {
        assert_eq!(p, &library.steps[k + 1].probabilities);
    }
    assert_eq!(live.probabilities, library.final_probabilities());

    // CLI on the exported session log.
    let log = dir.path().join("service").join("sessions").join(format!("{sid}.jsonl"));
    let out = Command::new(env!("CARGO_BIN_EXE_modn"))
        .args(["trajectory", "--model"])
        .arg(&model_path)
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cli: TrajectoryDump = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cli, service);
    let bits = |d: &TrajectoryDump| -> Vec<u64> {
        d.steps.iter().flat_map(|s| s.probabilities.iter().map(|p| p.to_bits())).collect()
    };
    assert_eq!(bits(&cli), bits(&service));
    assert_eq!(bits(&library_dump), bits(&service));
    println!("cross-interface equality: PASS");
    server.stop();
}

#[tokio::test]
async fn restart_replays_logs() {
    let (dir, _path, server, _model) = setup().await;
    let (_, body) = server.post("/sessions", json!({ "model_id": "fixture" })).await;
    let sid = parse::<Predictions>(body).session_id;
    for (f, v) in five_answers() {
        server
            .post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": f, "value": v }))
            .await;
    }
    server.delete(&format!("/sessions/{sid}/answers/c3")).await;
    let (_, before) = server.get(&format!("/sessions/{sid}/trajectory")).await;
    server.stop();

    let restarted = Server::start(&dir.path().join("service")).await;
    let (status, after) = restarted.get(&format!("/sessions/{sid}/trajectory")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    let (_, models) = restarted.get("/models").await;
    assert_eq!(models.as_array().unwrap().len(), 1);
    restarted.stop();
}

#[tokio::test]
async fn concurrent_sessions_are_isolated() {
    let (_dir, _path, server, model) = setup().await;
    let server = Arc::new(server);
    let mut tasks = Vec::new();
    for i in 0..8 {
        let s = Arc::clone(&server);
        tasks.push(tokio::spawn(async move {
            let (_, body) = s.post("/sessions", json!({ "model_id": "fixture" })).await;
            let sid = parse::<Predictions>(body).session_id;
            let x = i as f64 / 4.0;
            s.post(&format!("/sessions/{sid}/answers"), json!({ "feature_id": "c1", "value": x }))
                .await;
            let (_, body) = s.get(&format!("/sessions/{sid}/predictions")).await;
            (x, parse::<Predictions>(body).probabilities)
        }));
    }
    for t in tasks {
        let (x, probs) = t.await.unwrap();
        let oracle = model
            .run_answers(&answers(&model, &[("c1", RawValue::Number(x))]))
            .unwrap();
        assert_eq!(probs, oracle.final_probabilities());
    }
}

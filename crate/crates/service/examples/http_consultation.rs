//! Serves a freshly trained model over HTTP on an ephemeral port and walks
//! one consultation through the API: schema, session, answers, a retraction,
//! predictions, and the full trajectory.
//!
//! ```text
//! cargo run -p modn-service --example http_consultation
//! ```

use std::sync::Arc;

use modn::data::{generate_synthetic, SyntheticSpec};
use modn::model::ModelConfig;
use modn::training::{train_from_scratch, TrainConfig};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let table = generate_synthetic(&SyntheticSpec {
        n_records: 400,
        n_targets: 2,
        seed: 3,
        ..Default::default()
    })?;
    let config = TrainConfig {
        epochs: 10,
        model: ModelConfig::with_state_dim(16),
        ..Default::default()
    };
    let (model, _) = train_from_scratch(&table, &table, &config, 0)?;
    let model_path = dir.path().join("triage.modn");
    model.save(&model_path)?;

    let state = modn_service::build_state(&modn_service::ServeConfig {
        data_dir: Some(dir.path().join("service")),
        models: vec![model_path],
        ..Default::default()
    })?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, modn_service::router(Arc::clone(&state))).await });
    println!("serving on {base}");

    let http = reqwest::Client::new();
    let schema: Value = http.get(format!("{base}/models/triage/schema")).send().await?.json().await?;
    let questions: Vec<&str> = schema["features"].as_array().unwrap().iter().filter_map(|f| f["id"].as_str()).collect();
    println!("model asks: {}", questions.join(", "));

    let session: Value = http
        .post(format!("{base}/sessions"))
        .json(&json!({ "model_id": "triage" }))
        .send()
        .await?
        .json()
        .await?;
    let sid = session["session_id"].as_str().unwrap().to_string();

    for (feature, value) in [("c1", json!(0.8)), ("b0", json!(true)), ("k2", json!("L1"))] {
        let p: Value = http
            .post(format!("{base}/sessions/{sid}/answers"))
            .json(&json!({ "feature_id": feature, "value": value }))
            .send()
            .await?
            .json()
            .await?;
        println!("after {feature}={value}: {}", p["probabilities"]);
    }

    let bad = http
        .post(format!("{base}/sessions/{sid}/answers"))
        .json(&json!({ "feature_id": "k2", "value": "L0" }))
        .send()
        .await?;
    println!("answering k2 twice -> {} {}", bad.status(), bad.text().await?);

    http.delete(format!("{base}/sessions/{sid}/answers/b0")).send().await?.error_for_status()?;
    let now: Value = http.get(format!("{base}/sessions/{sid}/predictions")).send().await?.json().await?;
    println!("after retracting b0: step {} {}", now["step"], now["probabilities"]);

    let trajectory: Value = http.get(format!("{base}/sessions/{sid}/trajectory")).send().await?.json().await?;
    println!("trajectory:\n{}", serde_json::to_string_pretty(&trajectory)?);
    Ok(())
}

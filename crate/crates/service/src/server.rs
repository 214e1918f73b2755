use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{delete, get, post};
use axum::{Json, Router};

use crate::api::{CreateSession, ModelSummary, Predictions, RegisterModel, SchemaQuery, SchemaResponse, SubmitAnswer};
use crate::error::ServiceError;
use crate::state::{AppState, StateConfig};
use modn::model::TrajectoryDump;

type Shared = Arc<AppState>;
type Reply<T> = Result<Json<T>, ServiceError>;

async fn register_model(State(st): State<Shared>, Json(body): Json<RegisterModel>) -> Result<(StatusCode, Json<ModelSummary>), ServiceError> {
    let summary = st.register(&body.path, body.model_id)?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_models(State(st): State<Shared>) -> Json<Vec<ModelSummary>> {
    Json(st.list_models())
}

async fn get_schema(State(st): State<Shared>, Path(model_id): Path<String>, Query(q): Query<SchemaQuery>) -> Reply<SchemaResponse> {
    Ok(Json(st.schema(&model_id, q.session_id.as_deref()).await?))
}

async fn create_session(State(st): State<Shared>, Json(body): Json<CreateSession>) -> Result<(StatusCode, Json<Predictions>), ServiceError> {
    Ok((StatusCode::CREATED, Json(st.create_session(&body.model_id)?)))
}

async fn submit_answer(State(st): State<Shared>, Path(id): Path<String>, Json(body): Json<SubmitAnswer>) -> Reply<Predictions> {
    Ok(Json(st.submit_answer(&id, &body.feature_id, &body.value).await?))
}

async fn retract_answer(State(st): State<Shared>, Path((id, feature_id)): Path<(String, String)>) -> Reply<Predictions> {
    Ok(Json(st.retract_answer(&id, &feature_id).await?))
}

async fn predictions(State(st): State<Shared>, Path(id): Path<String>) -> Reply<Predictions> {
    Ok(Json(st.session_predictions(&id).await?))
}

async fn trajectory(State(st): State<Shared>, Path(id): Path<String>) -> Reply<TrajectoryDump> {
    Ok(Json(st.trajectory(&id).await?))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/models", post(register_model).get(list_models))
        .route("/models/:id/schema", get(get_schema))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/answers", post(submit_answer))
        .route("/sessions/:id/answers/:feature_id", delete(retract_answer))
        .route("/sessions/:id/predictions", get(predictions))
        .route("/sessions/:id/trajectory", get(trajectory))
        .with_state(state)
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub data_dir: Option<PathBuf>,
    pub threshold: f64,
    /// Models registered at startup, id taken from the file stem.
    pub models: Vec<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            threshold: modn::model::DEFAULT_THRESHOLD,
            models: Vec::new(),
        }
    }
}

pub fn build_state(config: &ServeConfig) -> Result<Shared, ServiceError> {
    let state = AppState::open(StateConfig {
        data_dir: config.data_dir.clone(),
        threshold: config.threshold,
    })?;
    for path in &config.models {
        state.register(path, None)?;
    }
    Ok(Arc::new(state))
}

/// Serves until ctrl-c.
pub async fn serve(config: ServeConfig) -> Result<(), ServiceError> {
    let state = build_state(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

//! Model registry and consultation sessions. The answer log is the single
//! source of truth for a session; every prediction is recomputed from it.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use modn::data::{Answer, FeatureDescriptor, FeatureKind, RawValue};
use modn::model::{load_model, LoadOptions, ModnModel, Trajectory, TrajectoryDump, DEFAULT_THRESHOLD};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::api::{ModelSummary, Predictions, SchemaResponse};
use crate::error::ServiceError;
use crate::journal::{self, Event};

type Result<T, E = ServiceError> = std::result::Result<T, E>;

pub struct RegisteredModel {
    pub summary: ModelSummary,
    pub model: Arc<ModnModel>,
}

pub struct Session {
    pub id: String,
    pub model_id: String,
    pub model: Arc<ModnModel>,
    pub answers: Vec<Answer>,
    journal: Option<PathBuf>,
}

impl Session {
    pub fn trajectory(&self) -> Result<Trajectory> {
        Ok(self.model.run_answers(&self.answers)?)
    }

    fn record(&self, event: &Event) -> Result<()> {
        if let Some(path) = &self.journal {
            journal::append(path, event)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RegistryEntry {
    model_id: String,
    path: PathBuf,
    fingerprint: String,
}

#[derive(Clone, Debug)]
pub struct StateConfig {
    /// Where the registry and session logs live; `None` keeps everything in
    /// memory.
    pub data_dir: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig {
            data_dir: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub struct AppState {
    config: StateConfig,
    models: RwLock<BTreeMap<String, Arc<RegisteredModel>>>,
    sessions: RwLock<HashMap<String, Arc<tokio::sync::RwLock<Session>>>>,
}

fn invalid(code: &'static str, message: String, detail: serde_json::Value) -> ServiceError {
    ServiceError::Invalid {
        code,
        message,
        detail,
    }
}

fn feature_hint(model: &ModnModel, feature_id: &str) -> serde_json::Value {
    match model.feature(feature_id) {
        Some(f) => {
            let levels = match &f.kind {
                FeatureKind::Categorical { levels } => Some(levels.clone()),
                _ => None,
            };
            json!({ "feature_id": f.id, "kind": f.kind.name(), "levels": levels })
        }
        None => json!({ "feature_id": feature_id }),
    }
}

impl AppState {
    /// Opens the data directory, reloading registered models and replaying
    /// every session log found there.
    pub fn open(config: StateConfig) -> Result<Self> {
        let state = AppState {
            config,
            models: RwLock::new(BTreeMap::new()),
            sessions: RwLock::new(HashMap::new()),
        };
        let Some(dir) = state.config.data_dir.clone() else {
            return Ok(state);
        };
        std::fs::create_dir_all(dir.join("sessions"))?;
        let registry = dir.join("models.json");
        if registry.exists() {
            let entries: Vec<RegistryEntry> = serde_json::from_slice(&std::fs::read(&registry)?)
                .map_err(|e| ServiceError::Internal(format!("{}: {e}", registry.display())))?;
            for e in entries {
                if let Err(err) = state.load_entry(&e.model_id, &e.path, Some(&e.fingerprint)) {
                    log::error!("could not reload model `{}`: {err}", e.model_id);
                }
            }
        }
        let mut logs: Vec<PathBuf> = std::fs::read_dir(dir.join("sessions"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        for path in logs {
            if let Err(err) = state.replay_log(&path) {
                log::error!("could not replay {}: {err}", path.display());
            }
        }
        Ok(state)
    }

    pub fn threshold(&self) -> f64 {
        self.config.threshold
    }

    fn load_entry(&self, model_id: &str, path: &Path, fingerprint: Option<&str>) -> Result<Arc<RegisteredModel>> {
        let options = match fingerprint {
            Some(f) => LoadOptions::expecting(f),
            None => LoadOptions::default(),
        };
        let model = load_model(path, &options).map_err(|e| {
            invalid("invalid_model", format!("cannot load `{}`: {e}", path.display()), json!({ "path": path }))
        })?;
        let summary = ModelSummary {
            model_id: model_id.to_string(),
            path: path.to_path_buf(),
            fingerprint: model.fingerprint(),
            feature_count: model.schema().len(),
            targets: model.targets().to_vec(),
        };
        let entry = Arc::new(RegisteredModel {
            summary,
            model: Arc::new(model),
        });
        self.models
            .write()
            .unwrap()
            .insert(model_id.to_string(), Arc::clone(&entry));
        Ok(entry)
    }

    fn save_registry(&self) -> Result<()> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(());
        };
        let entries: Vec<RegistryEntry> = self
            .models
            .read()
            .unwrap()
            .values()
            .map(|m| RegistryEntry {
                model_id: m.summary.model_id.clone(),
                path: m.summary.path.clone(),
                fingerprint: m.summary.fingerprint.clone(),
            })
            .collect();
        let tmp = dir.join("models.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entries).map_err(|e| ServiceError::Internal(e.to_string()))?)?;
        std::fs::rename(tmp, dir.join("models.json"))?;
        Ok(())
    }

    fn replay_log(&self, path: &Path) -> Result<()> {
        let events = journal::read(path)?;
        let r = journal::replay(&events).map_err(ServiceError::Internal)?;
        let model = self.model(&r.model_id)?;
        if model.summary.fingerprint != r.fingerprint {
            return Err(ServiceError::Internal(format!(
                "session `{}` was recorded against a different model",
                r.session_id
            )));
        }
        let answers = r
            .answers
            .into_iter()
            .map(|(feature_id, value)| {
                let group = model.model.feature(&feature_id).map_or(0, |f| f.group);
                Answer {
                    feature_id,
                    value,
                    group,
                }
            })
            .collect();
        let session = Session {
            id: r.session_id.clone(),
            model_id: r.model_id,
            model: Arc::clone(&model.model),
            answers,
            journal: Some(path.to_path_buf()),
        };
        session.trajectory()?;
        self.sessions
            .write()
            .unwrap()
            .insert(r.session_id, Arc::new(tokio::sync::RwLock::new(session)));
        Ok(())
    }

    pub fn register(&self, path: &Path, model_id: Option<String>) -> Result<ModelSummary> {
        let model_id = match model_id {
            Some(id) => id,
            None => path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
                .ok_or_else(|| invalid("invalid_model", "cannot derive a model id from the path".into(), json!({ "path": path })))?,
        };
        if model_id.is_empty() || model_id.contains('/') {
            return Err(invalid("invalid_model", format!("`{model_id}` is not a usable model id"), json!({ "model_id": model_id })));
        }
        if let Some(existing) = self.models.read().unwrap().get(&model_id) {
            if existing.summary.path == path {
                return Ok(existing.summary.clone());
            }
            return Err(ServiceError::Conflict {
                message: format!("model id `{model_id}` is already registered to another file"),
                detail: json!({ "model_id": model_id, "path": existing.summary.path }),
            });
        }
        let entry = self.load_entry(&model_id, path, None)?;
        self.save_registry()?;
        Ok(entry.summary.clone())
    }

    pub fn list_models(&self) -> Vec<ModelSummary> {
        self.models
            .read()
            .unwrap()
            .values()
            .map(|m| m.summary.clone())
            .collect()
    }

    pub fn model(&self, model_id: &str) -> Result<Arc<RegisteredModel>> {
        self.models
            .read()
            .unwrap()
            .get(model_id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("model_id", model_id))
    }

    pub fn session(&self, session_id: &str) -> Result<Arc<tokio::sync::RwLock<Session>>> {
        self.sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("session_id", session_id))
    }

    pub async fn schema(&self, model_id: &str, session_id: Option<&str>) -> Result<SchemaResponse> {
        let m = self.model(model_id)?;
        let remaining = match session_id {
            Some(sid) => {
                let session = self.session(sid)?;
                let s = session.read().await;
                if s.model_id != model_id {
                    return Err(invalid(
                        "session_model_mismatch",
                        format!("session `{sid}` belongs to model `{}`", s.model_id),
                        json!({ "session_id": sid, "model_id": s.model_id }),
                    ));
                }
                Some(
                    m.model
                        .schema()
                        .iter()
                        .filter(|f| !s.answers.iter().any(|a| a.feature_id == f.id))
                        .map(|f| f.id.clone())
                        .collect(),
                )
            }
            None => None,
        };
        Ok(SchemaResponse {
            model_id: model_id.to_string(),
            fingerprint: m.summary.fingerprint.clone(),
            features: m.model.schema().iter().cloned().map(FeatureDescriptor::from).collect(),
            targets: m.model.targets().to_vec(),
            threshold: self.threshold(),
            remaining,
        })
    }

    fn predictions(&self, session: &Session) -> Result<Predictions> {
        let traj = session.trajectory()?;
        Ok(Predictions {
            session_id: session.id.clone(),
            model_id: session.model_id.clone(),
            step: session.answers.len(),
            targets: traj.targets.clone(),
            probabilities: traj.final_probabilities().to_vec(),
            threshold: self.threshold(),
        })
    }

    pub fn create_session(&self, model_id: &str) -> Result<Predictions> {
        let m = self.model(model_id)?;
        let id = uuid::Uuid::new_v4().to_string();
        let journal = self
            .config
            .data_dir
            .as_ref()
            .map(|d| d.join("sessions").join(format!("{id}.jsonl")));
        let session = Session {
            id: id.clone(),
            model_id: model_id.to_string(),
            model: Arc::clone(&m.model),
            answers: Vec::new(),
            journal,
        };
        session.record(&Event::Created {
            session_id: id.clone(),
            model_id: model_id.to_string(),
            fingerprint: m.summary.fingerprint.clone(),
            at_ms: journal::now_ms(),
        })?;
        let out = self.predictions(&session)?;
        self.sessions
            .write()
            .unwrap()
            .insert(id, Arc::new(tokio::sync::RwLock::new(session)));
        Ok(out)
    }

    pub async fn submit_answer(&self, session_id: &str, feature_id: &str, value: &RawValue) -> Result<Predictions> {
        let session = self.session(session_id)?;
        let mut s = session.write().await;
        let feature = s.model.feature(feature_id).cloned().ok_or_else(|| {
            invalid(
                "unknown_feature",
                format!("model `{}` has no feature `{feature_id}`", s.model_id),
                json!({ "feature_id": feature_id }),
            )
        })?;
        if s.answers.iter().any(|a| a.feature_id == feature_id) {
            return Err(ServiceError::Conflict {
                message: format!("feature `{feature_id}` is already answered in this session"),
                detail: json!({ "feature_id": feature_id }),
            });
        }
        let value = feature
            .canonicalize(value)
            .map_err(|e| invalid("invalid_value", e.to_string(), feature_hint(&s.model, feature_id)))?;
        s.record(&Event::Answered {
            feature_id: feature_id.to_string(),
            value: value.clone(),
            at_ms: journal::now_ms(),
        })?;
        s.answers.push(Answer {
            feature_id: feature_id.to_string(),
            value,
            group: feature.group,
        });
        self.predictions(&s)
    }

    pub async fn retract_answer(&self, session_id: &str, feature_id: &str) -> Result<Predictions> {
        let session = self.session(session_id)?;
        let mut s = session.write().await;
        if !s.answers.iter().any(|a| a.feature_id == feature_id) {
            return Err(ServiceError::NotFound {
                message: format!("feature `{feature_id}` is not answered in this session"),
                detail: json!({ "feature_id": feature_id }),
            });
        }
        s.record(&Event::Retracted {
            feature_id: feature_id.to_string(),
            at_ms: journal::now_ms(),
        })?;
        s.answers.retain(|a| a.feature_id != feature_id);
        self.predictions(&s)
    }

    pub async fn session_predictions(&self, session_id: &str) -> Result<Predictions> {
        let session = self.session(session_id)?;
        let s = session.read().await;
        self.predictions(&s)
    }

    pub async fn trajectory(&self, session_id: &str) -> Result<TrajectoryDump> {
        let session = self.session(session_id)?;
        let s = session.read().await;
        Ok(TrajectoryDump::new(&s.model, &s.trajectory()?, self.threshold()))
    }
}

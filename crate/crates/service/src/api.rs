//! Request and response bodies. Field names are part of the HTTP contract.

use std::path::PathBuf;

use modn::data::{FeatureDescriptor, RawValue};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterModel {
    pub path: PathBuf,
    /// Defaults to the file stem.
    #[serde(default)]
    pub model_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub path: PathBuf,
    pub fingerprint: String,
    pub feature_count: usize,
    pub targets: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub model_id: String,
    pub fingerprint: String,
    pub features: Vec<FeatureDescriptor>,
    pub targets: Vec<String>,
    pub threshold: f64,
    /// Present when the request named a session: its unanswered features
    /// in schema order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
pub struct SchemaQuery {
    pub session_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub model_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitAnswer {
    pub feature_id: String,
    pub value: RawValue,
}

/// Current per-target probabilities of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub session_id: String,
    pub model_id: String,
    /// Number of answers applied so far.
    pub step: usize,
    pub targets: Vec<String>,
    pub probabilities: Vec<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: serde_json::Value,
}

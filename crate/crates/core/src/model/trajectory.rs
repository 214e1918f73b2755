use serde::{Deserialize, Serialize};

use super::ModnModel;
use crate::data::RawValue;

/// Probability at which a target counts as predicted present.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    /// `None` on row 0, which decodes the initial state.
    pub feature_id: Option<String>,
    pub answer: Option<RawValue>,
    /// One probability per target, in `Trajectory::targets` order.
    pub probabilities: Vec<f64>,
}

/// Per-step predictions over a consultation: `answers + 1` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub targets: Vec<String>,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn final_probabilities(&self) -> &[f64] {
        &self.steps.last().expect("row 0 always exists").probabilities
    }

    /// Features in the order their encoders were applied.
    pub fn applied_features(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter_map(|s| s.feature_id.as_deref())
            .collect()
    }

    pub fn probability(&self, step: usize, target: &str) -> Option<f64> {
        let t = self.targets.iter().position(|x| x == target)?;
        self.steps.get(step).map(|s| s.probabilities[t])
    }
}

/// Self-contained JSON view of a trajectory: everything needed to draw the
/// step-by-step heatmap. Shared by the CLI `trajectory` command and the
/// consultation service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub model_fingerprint: String,
    pub threshold: f64,
    pub targets: Vec<String>,
    pub steps: Vec<TrajectoryDumpStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDumpStep {
    pub step: usize,
    /// `"initial"` on row 0.
    pub feature_id: String,
    pub question: Option<String>,
    pub answer: Option<RawValue>,
    pub probabilities: Vec<f64>,
}

impl TrajectoryDump {
    pub fn new(model: &ModnModel, trajectory: &Trajectory, threshold: f64) -> Self {
        TrajectoryDump {
            model_fingerprint: model.fingerprint(),
            threshold,
            targets: trajectory.targets.clone(),
            steps: trajectory
                .steps
                .iter()
                .map(|s| TrajectoryDumpStep {
                    step: s.step,
                    feature_id: s.feature_id.clone().unwrap_or_else(|| "initial".into()),
                    question: s
                        .feature_id
                        .as_deref()
                        .and_then(|f| model.feature(f))
                        .map(|f| f.question.clone()),
                    answer: s.answer.clone(),
                    probabilities: s.probabilities.clone(),
                })
                .collect(),
        }
    }
}

//! The modular network: a trained initial state, one encoder per feature
//! that adds a residual update to the state, and one sigmoid decoder per
//! target that reads a probability off the state.
//!
//! ```text
//! s_0 = S0                      (trained constant)
//! s_t = s_{t-1} + enc_q(s_{t-1} ++ a_t)
//! p_t(d) = dec_d(s_t)
//! ```
//!
//! Missing features are handled by never applying their encoder.

mod io;
mod trajectory;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{
    HiddenActivation, Mlp, MlpSpec, NodeId, OutputActivation, ParamId, ParamStore, Tape, Tensor,
};
use crate::data::{
    encode_answer, feature_index, Answer, ConsultationRecord, FeatureDescriptor, FeatureSchema,
    NormStats,
};
use crate::error::{Error, Result};

pub use io::{load_model, FingerprintPolicy, LoadOptions, FORMAT_VERSION, MAGIC};
pub use trajectory::{Trajectory, TrajectoryDump, TrajectoryDumpStep, TrajectoryStep, DEFAULT_THRESHOLD};

/// Parameter name of the trained initial state.
pub const INITIAL_STATE: &str = "state0";

pub fn encoder_prefix(feature_id: &str) -> String {
    format!("enc.{feature_id}")
}

pub fn decoder_prefix(target_id: &str) -> String {
    format!("dec.{target_id}")
}

/// Module sizes. Hidden widths of `None` default to twice the state size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub encoder_hidden: Option<Vec<usize>>,
    pub decoder_hidden: Option<Vec<usize>>,
    pub hidden_activation: HiddenActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            state_dim: 32,
            encoder_hidden: None,
            decoder_hidden: None,
            hidden_activation: HiddenActivation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn with_state_dim(state_dim: usize) -> Self {
        ModelConfig {
            state_dim,
            ..Default::default()
        }
    }

    fn encoder_hidden(&self) -> Vec<usize> {
        self.encoder_hidden
            .clone()
            .unwrap_or_else(|| vec![2 * self.state_dim])
    }

    fn decoder_hidden(&self) -> Vec<usize> {
        self.decoder_hidden
            .clone()
            .unwrap_or_else(|| vec![2 * self.state_dim])
    }

    pub fn encoder_spec(&self, answer_width: usize) -> MlpSpec {
        let mut sizes = vec![self.state_dim + answer_width];
        sizes.extend(self.encoder_hidden());
        sizes.push(self.state_dim);
        MlpSpec {
            layer_sizes: sizes,
            hidden_activation: self.hidden_activation,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        let mut sizes = vec![self.state_dim];
        sizes.extend(self.decoder_hidden());
        sizes.push(1);
        MlpSpec {
            layer_sizes: sizes,
            hidden_activation: self.hidden_activation,
            output_activation: OutputActivation::Sigmoid,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::Config("state_dim must be at least 1".into()));
        }
        let zero = |h: &Option<Vec<usize>>| h.as_ref().is_some_and(|v| v.contains(&0));
        if zero(&self.encoder_hidden) || zero(&self.decoder_hidden) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// The patient representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Derives an independent RNG seed for a named module, so adding a module
/// never perturbs the initialization of the others.
pub fn module_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Hex SHA-256 over the canonical JSON of the features and targets.
pub fn schema_fingerprint(schema: &[FeatureSchema], targets: &[String]) -> String {
    let features: Vec<FeatureDescriptor> = schema.iter().cloned().map(Into::into).collect();
    let canonical = serde_json::to_vec(&(features, targets)).expect("schema serializes");
    format!("{:x}", Sha256::digest(canonical))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModnModel {
    config: ModelConfig,
    seed: u64,
    schema: Vec<FeatureSchema>,
    targets: Vec<String>,
    normalization: NormStats,
    params: ParamStore,
    initial_state: ParamId,
    encoders: BTreeMap<String, Mlp>,
    decoders: BTreeMap<String, Mlp>,
}

impl ModnModel {
    /// One encoder per feature and one decoder per target; the initial state
    /// starts at zero.
    pub fn new(
        schema: Vec<FeatureSchema>,
        targets: Vec<String>,
        config: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if schema.is_empty() {
            return Err(Error::Schema("a model needs at least one feature".into()));
        }
        if targets.is_empty() {
            return Err(Error::Schema("a model needs at least one target".into()));
        }
        crate::data::SchemaDescriptor {
            features: schema.clone(),
            targets: targets.clone(),
            missing_sentinel: String::new(),
            id_column: None,
        }
        .validate()?;

        let mut params = ParamStore::new(seed);
        let initial_state = params.insert(INITIAL_STATE, Tensor::zeros(&[config.state_dim]))?;
        let mut model = ModnModel {
            config,
            seed,
            schema: Vec::new(),
            targets: Vec::new(),
            normalization: NormStats::new(),
            params,
            initial_state,
            encoders: BTreeMap::new(),
            decoders: BTreeMap::new(),
        };
        for f in schema {
            model.add_feature(f)?;
        }
        for t in targets {
            let mut rng = ChaCha8Rng::seed_from_u64(module_seed(seed, &decoder_prefix(&t)));
            let mlp = Mlp::init(
                model.config.decoder_spec(),
                &mut model.params,
                &decoder_prefix(&t),
                &mut rng,
            )?;
            model.decoders.insert(t.clone(), mlp);
            model.targets.push(t);
        }
        Ok(model)
    }

    /// Adds a freshly initialized encoder for a feature the model has not
    /// seen. Its initialization depends only on the model seed and the
    /// feature id.
    pub fn add_feature(&mut self, feature: FeatureSchema) -> Result<()> {
        feature.validate()?;
        if self.encoders.contains_key(&feature.id) {
            return Err(Error::Schema(format!(
                "feature `{}` already has an encoder",
                feature.id
            )));
        }
        if self.targets.contains(&feature.id) {
            return Err(Error::Schema(format!(
                "`{}` is already a target",
                feature.id
            )));
        }
        let prefix = encoder_prefix(&feature.id);
        let mut rng = ChaCha8Rng::seed_from_u64(module_seed(self.seed, &prefix));
        let mlp = Mlp::init(
            self.config.encoder_spec(feature.encoded_width()),
            &mut self.params,
            &prefix,
            &mut rng,
        )?;
        self.encoders.insert(feature.id.clone(), mlp);
        self.schema.push(feature);
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state_dim(&self) -> usize {
        self.config.state_dim
    }

    pub fn schema(&self) -> &[FeatureSchema] {
        &self.schema
    }

    pub fn feature(&self, id: &str) -> Option<&FeatureSchema> {
        self.schema.iter().find(|f| f.id == id)
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn fingerprint(&self) -> String {
        schema_fingerprint(&self.schema, &self.targets)
    }

    pub fn normalization(&self) -> &NormStats {
        &self.normalization
    }

    /// Adds stats for continuous features that have none yet. Existing
    /// entries are kept so ported encoders see the same inputs as before.
    pub fn fill_normalization(&mut self, stats: &NormStats) {
        for (k, v) in stats {
            if self.encoders.contains_key(k) {
                self.normalization.entry(k.clone()).or_insert(*v);
            }
        }
    }

    pub fn set_normalization(&mut self, stats: NormStats) {
        self.normalization = stats;
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn initial_state_param(&self) -> ParamId {
        self.initial_state
    }

    pub fn encoder(&self, feature_id: &str) -> Result<&Mlp> {
        self.encoders
            .get(feature_id)
            .ok_or_else(|| Error::MissingEncoder(feature_id.to_string()))
    }

    pub fn decoder(&self, target_id: &str) -> Result<&Mlp> {
        self.decoders
            .get(target_id)
            .ok_or_else(|| Error::MissingDecoder(target_id.to_string()))
    }

    /// Parameter names belonging to one feature's encoder.
    pub fn encoder_param_names(&self, feature_id: &str) -> Result<Vec<String>> {
        let mlp = self.encoder(feature_id)?;
        Ok(mlp
            .param_ids()
            .map(|id| self.params.name(id).to_string())
            .collect())
    }

    pub fn initial_state(&self) -> StateVector {
        StateVector(self.params.value(self.initial_state).data().to_vec())
    }

    /// Validates and encodes a raw answer with this model's schema and
    /// normalization.
    pub fn encode_answer(&self, answer: &Answer) -> Result<Vec<f64>> {
        let f = self
            .feature(&answer.feature_id)
            .ok_or_else(|| Error::MissingEncoder(answer.feature_id.clone()))?;
        encode_answer(f, &answer.value, self.normalization.get(&f.id))
    }

    /// `s + enc(s ++ a)`. Neither the model nor `state` is modified.
    pub fn encode_step(
        &self,
        state: &StateVector,
        feature_id: &str,
        encoded: &[f64],
    ) -> Result<StateVector> {
        let mlp = self.encoder(feature_id)?;
        self.check_state(state)?;
        let width = mlp.spec().input_dim() - self.state_dim();
        if encoded.len() != width {
            return Err(Error::Shape(format!(
                "feature `{feature_id}` expects an encoded answer of width {width}, got {}",
                encoded.len()
            )));
        }
        let mut input = state.0.clone();
        input.extend_from_slice(encoded);
        let delta = mlp.eval(&self.params, &input)?;
        Ok(StateVector(
            state.0.iter().zip(&delta).map(|(s, d)| s + d).collect(),
        ))
    }

    pub fn decode(&self, state: &StateVector, target_id: &str) -> Result<f64> {
        let mlp = self.decoder(target_id)?;
        self.check_state(state)?;
        Ok(mlp.eval(&self.params, &state.0)?[0])
    }

    /// Probabilities for every target, in [`Self::targets`] order.
    pub fn decode_all(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.targets.iter().map(|t| self.decode(state, t)).collect()
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has {} entries, model state_dim is {}",
                state.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// Encodes the answers in order, decoding every target before the first
    /// answer and after each one.
    pub fn run_answers(&self, answers: &[Answer]) -> Result<Trajectory> {
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(answers.len() + 1);
        steps.push(TrajectoryStep {
            step: 0,
            feature_id: None,
            answer: None,
            probabilities: self.decode_all(&state)?,
        });
        for (t, a) in answers.iter().enumerate() {
            let encoded = self.encode_answer(a)?;
            state = self.encode_step(&state, &a.feature_id, &encoded)?;
            steps.push(TrajectoryStep {
                step: t + 1,
                feature_id: Some(a.feature_id.clone()),
                answer: Some(a.value.clone()),
                probabilities: self.decode_all(&state)?,
            });
        }
        Ok(Trajectory {
            targets: self.targets.clone(),
            steps,
        })
    }

    pub fn run_consultation(&self, record: &ConsultationRecord) -> Result<Trajectory> {
        let index = feature_index(&self.schema);
        for a in &record.answers {
            if !index.contains_key(a.feature_id.as_str()) {
                return Err(Error::MissingEncoder(a.feature_id.clone()));
            }
        }
        self.run_answers(&record.answers)
    }

    /// Final-step probabilities for a record.
    pub fn predict(&self, record: &ConsultationRecord) -> Result<Vec<f64>> {
        let mut state = self.initial_state();
        for a in &record.answers {
            let encoded = self.encode_answer(a)?;
            state = self.encode_step(&state, &a.feature_id, &encoded)?;
        }
        self.decode_all(&state)
    }

    /// Records `S0` on the tape.
    pub fn initial_state_node(&self, tape: &mut Tape) -> NodeId {
        tape.param(&self.params, self.initial_state)
    }

    /// Records one residual state update on the tape.
    pub fn encode_step_node(
        &self,
        tape: &mut Tape,
        state: NodeId,
        feature_id: &str,
        encoded: Vec<f64>,
    ) -> Result<NodeId> {
        let mlp = self.encoder(feature_id)?;
        let answer = tape.constant(Tensor::vector(encoded));
        let input = tape.concat(state, answer);
        let delta = mlp.forward(&self.params, input, tape)?;
        Ok(tape.add(state, delta))
    }

    /// Records a decoder's pre-sigmoid output on the tape.
    pub fn decode_logit_node(&self, tape: &mut Tape, state: NodeId, target_id: &str) -> Result<NodeId> {
        self.decoder(target_id)?
            .forward_logits(&self.params, state, tape)
    }

    /// Serialized bytes: [`MAGIC`], version, JSON header, f64 parameters, SHA-256.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        io::to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8], options: &LoadOptions) -> Result<Self> {
        io::from_bytes(bytes, options)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

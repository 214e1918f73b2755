//! Stepwise supervised training, parameter freezing, and the two porting
//! procedures: modular fine-tuning and modular update.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Optimizer, OptimizerConfig, ParamStore, Tape};
use crate::data::{ConsultationRecord, DatasetTable, FeatureSchema};
use crate::error::{Error, Result};
use crate::experiments::metrics::macro_f1;
use crate::model::{ModelConfig, ModnModel, DEFAULT_THRESHOLD};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepWeights {
    /// Every step from the initial state onwards, equally weighted.
    #[default]
    Uniform,
    /// Only the prediction after the last answer.
    FinalOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Module sizes used when a model is built from scratch.
    pub model: ModelConfig,
    pub step_weights: StepWeights,
    /// Whether the prediction from the initial state (before any answer)
    /// is supervised under `Uniform` weights.
    pub supervise_initial_state: bool,
    pub shuffle_seed: u64,
    /// Epochs without validation improvement before stopping; `None`
    /// disables early stopping.
    pub patience: Option<usize>,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
            model: ModelConfig::default(),
            step_weights: StepWeights::Uniform,
            supervise_initial_state: true,
            shuffle_seed: 0,
            patience: Some(20),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Parameters held fixed during training.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub frozen: BTreeSet<String>,
}

impl FreezeMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn everything(model: &ModnModel) -> Self {
        FreezeMask {
            frozen: model.params().names().map(str::to_string).collect(),
        }
    }

    /// Everything except the encoders of `trainable_features`.
    pub fn all_but_encoders(model: &ModnModel, trainable_features: &[String]) -> Result<Self> {
        let mut keep = BTreeSet::new();
        for f in trainable_features {
            keep.extend(model.encoder_param_names(f)?);
        }
        Ok(FreezeMask {
            frozen: model
                .params()
                .names()
                .filter(|n| !keep.contains(*n))
                .map(str::to_string)
                .collect(),
        })
    }

    fn apply(&self, params: &mut ParamStore) -> Result<()> {
        for name in &self.frozen {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Config(format!("freeze mask names unknown parameter `{name}`")))?;
            params.set_frozen(id, true);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean per-record loss for each epoch run.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Per epoch, macro F1 of the final-step prediction for each target.
    pub val_macro_f1: Vec<BTreeMap<String, f64>>,
    /// Epoch (0-based) whose parameters were returned.
    pub best_epoch: usize,
}

impl LossReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

/// Records the summed logistic loss over every supervised step and target
/// of one consultation.
pub fn stepwise_loss(
    model: &ModnModel,
    record: &ConsultationRecord,
    weights: StepWeights,
    supervise_initial_state: bool,
    tape: &mut Tape,
) -> Result<NodeId> {
    let labels: Vec<f64> = model
        .targets()
        .iter()
        .map(|t| {
            record
                .labels
                .get(t)
                .map(|&y| f64::from(y))
                .ok_or_else(|| Error::Schema(format!("record `{}` has no label for `{t}`", record.id)))
        })
        .collect::<Result<_>>()?;

    let supervise = |tape: &mut Tape, state: NodeId, terms: &mut Vec<NodeId>| -> Result<()> {
        for (t, target) in model.targets().iter().enumerate() {
            let z = model.decode_logit_node(tape, state, target)?;
            terms.push(tape.bce_with_logits(z, &labels[t..t + 1])?);
        }
        Ok(())
    };

    let mut terms = Vec::new();
    let mut state = model.initial_state_node(tape);
    let n = record.answers.len();
    let include = |step: usize| match weights {
        StepWeights::Uniform => step > 0 || supervise_initial_state,
        StepWeights::FinalOnly => step == n,
    };
    if include(0) {
        supervise(tape, state, &mut terms)?;
    }
    for (i, a) in record.answers.iter().enumerate() {
        let encoded = model.encode_answer(a)?;
        state = model.encode_step_node(tape, state, &a.feature_id, encoded)?;
        if include(i + 1) {
            supervise(tape, state, &mut terms)?;
        }
    }
    tape.sum(&terms)
}

/// Randomly reorders answers within each simultaneity group. Each group
/// keeps the positions it occupied, so the order between groups is
/// unchanged.
pub fn shuffle_simultaneous(record: &ConsultationRecord, seed: u64) -> ConsultationRecord {
    shuffle_with(record, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn shuffle_with(record: &ConsultationRecord, rng: &mut ChaCha8Rng) -> ConsultationRecord {
    let mut positions: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, a) in record.answers.iter().enumerate() {
        positions.entry(a.group).or_default().push(i);
    }
    let mut out = record.clone();
    for slots in positions.values().filter(|s| s.len() > 1) {
        let mut members = slots.clone();
        members.shuffle(rng);
        for (&slot, &src) in slots.iter().zip(&members) {
            out.answers[slot] = record.answers[src].clone();
        }
    }
    out
}

fn mean_loss(model: &ModnModel, records: &[ConsultationRecord], config: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for r in records {
        let mut tape = Tape::new();
        let loss = stepwise_loss(model, r, config.step_weights, config.supervise_initial_state, &mut tape)?;
        total += tape.value(loss).data()[0];
    }
    Ok(total / records.len().max(1) as f64)
}

fn val_f1(model: &ModnModel, records: &[ConsultationRecord], threshold: f64) -> Result<BTreeMap<String, f64>> {
    let mut decisions = vec![Vec::with_capacity(records.len()); model.targets().len()];
    let mut labels = vec![Vec::with_capacity(records.len()); model.targets().len()];
    for r in records {
        let p = model.predict(r)?;
        for (t, target) in model.targets().iter().enumerate() {
            decisions[t].push(p[t] >= threshold);
            labels[t].push(r.labels.get(target) == Some(&1));
        }
    }
    Ok(model
        .targets()
        .iter()
        .enumerate()
        .map(|(t, name)| (name.clone(), macro_f1(&decisions[t], &labels[t])))
        .collect())
}

fn check_compatible(model: &ModnModel, table: &DatasetTable, what: &str) -> Result<()> {
    for r in &table.records {
        for a in &r.answers {
            model.encoder(&a.feature_id).map_err(|_| {
                Error::MissingEncoder(format!("{} (record `{}` in {what})", a.feature_id, r.id))
            })?;
        }
        for t in model.targets() {
            if !r.labels.contains_key(t) {
                return Err(Error::Schema(format!(
                    "record `{}` in {what} has no label for `{t}`",
                    r.id
                )));
            }
        }
    }
    Ok(())
}

/// Trains every parameter not covered by `mask` and returns the snapshot
/// with the lowest validation loss (training loss when `val` is empty).
///
/// Continuous features lacking normalization stats get them from `train`.
pub fn train(
    model: &ModnModel,
    train_set: &DatasetTable,
    val_set: &DatasetTable,
    config: &TrainConfig,
    mask: &FreezeMask,
) -> Result<(ModnModel, LossReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set has no records".into()));
    }
    let mut model = model.clone();
    check_compatible(&model, train_set, "training set")?;
    check_compatible(&model, val_set, "validation set")?;
    for id in model.params().ids().collect::<Vec<_>>() {
        model.params_mut().set_frozen(id, false);
    }
    mask.apply(model.params_mut())?;
    let all_frozen = model.params().ids().all(|id| model.params().is_frozen(id));

    // Stats may only be added for encoders that will be trained; a frozen
    // encoder must keep seeing exactly the inputs it saw before.
    let mut stats = train_set.normalization_stats();
    stats.retain(|feature, _| {
        model.encoder(feature).is_ok_and(|mlp| {
            mlp.param_ids().any(|id| !model.params().is_frozen(id))
        })
    });
    model.fill_normalization(&stats);

    let mut optimizer = Optimizer::new(config.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut report = LossReport::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let record = shuffle_with(&train_set.records[i], &mut rng);
                let mut tape = Tape::new();
                let loss = stepwise_loss(
                    &model,
                    &record,
                    config.step_weights,
                    config.supervise_initial_state,
                    &mut tape,
                )?;
                epoch_loss += tape.value(loss).data()[0];
                let scaled = tape.scale(loss, scale);
                if !all_frozen {
                    tape.backward(scaled, model.params_mut())?;
                }
            }
            if !all_frozen {
                optimizer.step(model.params_mut());
            }
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);

        let monitor = if val_set.is_empty() {
            mean_loss(&model, &train_set.records, config)?
        } else {
            mean_loss(&model, &val_set.records, config)?
        };
        report.val_loss.push(monitor);
        let f1_set = if val_set.is_empty() { &train_set.records } else { &val_set.records };
        report.val_macro_f1.push(val_f1(&model, f1_set, config.threshold)?);

        if best.as_ref().is_none_or(|(b, _)| monitor < *b) {
            best = Some((monitor, model.params().clone()));
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
        if all_frozen {
            break;
        }
    }

    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    for id in model.params().ids().collect::<Vec<_>>() {
        model.params_mut().set_frozen(id, false);
    }
    Ok((model, report))
}

/// Builds a fresh model over `train_set`'s schema and trains it fully.
pub fn train_from_scratch(
    train_set: &DatasetTable,
    val_set: &DatasetTable,
    config: &TrainConfig,
    seed: u64,
) -> Result<(ModnModel, LossReport)> {
    let model = ModnModel::new(
        train_set.schema.clone(),
        train_set.targets.clone(),
        config.model.clone(),
        seed,
    )?;
    train(&model, train_set, val_set, config, &FreezeMask::none())
}

fn extend_with(source: &ModnModel, new_features: &[FeatureSchema]) -> Result<ModnModel> {
    let mut model = source.clone();
    for f in new_features {
        if source.feature(&f.id).is_some() {
            return Err(Error::Schema(format!(
                "new feature `{}` already exists in the source model",
                f.id
            )));
        }
        model.add_feature(f.clone())?;
    }
    Ok(model)
}

/// Ports a trained model to a new dataset: adds fresh encoders for
/// `new_features` and trains every parameter on the target data.
pub fn fine_tune(
    source: &ModnModel,
    target_train: &DatasetTable,
    target_val: &DatasetTable,
    new_features: &[FeatureSchema],
    config: &TrainConfig,
) -> Result<ModnModel> {
    let model = extend_with(source, new_features)?;
    train(&model, target_train, target_val, config, &FreezeMask::none()).map(|(m, _)| m)
}

/// Adds fresh encoders for `new_features` and trains only those. The
/// initial state, every ported encoder, and every decoder stay fixed, so
/// predictions for consultations without new features are unchanged.
pub fn modular_update(
    source: &ModnModel,
    target_train: &DatasetTable,
    target_val: &DatasetTable,
    new_features: &[FeatureSchema],
    config: &TrainConfig,
) -> Result<ModnModel> {
    let model = extend_with(source, new_features)?;
    let ids: Vec<String> = new_features.iter().map(|f| f.id.clone()).collect();
    let mask = FreezeMask::all_but_encoders(&model, &ids)?;
    train(&model, target_train, target_val, config, &mask).map(|(m, _)| m)
}

#[cfg(test)]
mod tests;

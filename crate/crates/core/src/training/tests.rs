use std::collections::HashMap;

use super::*;
use crate::autodiff::OptimizerConfig;
use crate::data::{generate_synthetic, SyntheticSpec};
use crate::model::ModelConfig;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_records: 120,
        n_continuous: 2,
        n_binary: 2,
        n_categorical: 2,
        n_targets: 2,
        group_size: 2,
        seed,
        ..Default::default()
    }
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 8,
        model: ModelConfig::with_state_dim(8),
        patience: None,
        ..Default::default()
    }
}

fn zero_decoder_outputs(model: &mut ModnModel) {
    for t in model.targets().to_vec() {
        let (w, b) = model.decoder(&t).unwrap().output_layer();
        model.params_mut().value_mut(w).fill(0.0);
        model.params_mut().value_mut(b).fill(0.0);
    }
}

#[test]
fn uninformative_decoders_cost_ln2_per_supervised_step() {
    let schema = vec![FeatureSchema::binary("f", 0)];
    let mut model = ModnModel::new(schema, vec!["d".into()], ModelConfig::with_state_dim(4), 1).unwrap();
    zero_decoder_outputs(&mut model);
    let record = ConsultationRecord::new("r").answer("f", true, 0).label("d", true);
    let mut tape = Tape::new();
    let loss = stepwise_loss(&model, &record, StepWeights::Uniform, true, &mut tape).unwrap();
    assert!((tape.value(loss).data()[0] - 2.0 * 2f64.ln()).abs() < 1e-12);

    let mut tape = Tape::new();
    let loss = stepwise_loss(&model, &record, StepWeights::FinalOnly, true, &mut tape).unwrap();
    assert!((tape.value(loss).data()[0] - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_decoder_has_near_zero_loss() {
    let schema = vec![FeatureSchema::binary("f", 0)];
    let mut model = ModnModel::new(schema, vec!["d".into()], ModelConfig::with_state_dim(4), 1).unwrap();
    zero_decoder_outputs(&mut model);
    let (_, b) = model.decoder("d").unwrap().output_layer();
    model.params_mut().value_mut(b).fill(40.0);
    let record = ConsultationRecord::new("r").answer("f", false, 0).label("d", true);
    let mut tape = Tape::new();
    let loss = stepwise_loss(&model, &record, StepWeights::Uniform, true, &mut tape).unwrap();
    assert!(tape.value(loss).data()[0] < 1e-15);
}

#[test]
fn loss_matches_trajectory_cross_entropy() {
    let table = generate_synthetic(&small_spec(3)).unwrap();
    let model = ModnModel::new(table.schema.clone(), table.targets.clone(), ModelConfig::with_state_dim(8), 9).unwrap();
    let mut model = model;
    model.fill_normalization(&table.normalization_stats());
    for r in table.records.iter().take(20) {
        let traj = model.run_consultation(r).unwrap();
        let mut oracle = 0.0;
        for step in &traj.steps {
            for (t, target) in traj.targets.iter().enumerate() {
                let p = step.probabilities[t];
                oracle -= if r.labels[target] == 1 { p.ln() } else { (1.0 - p).ln() };
            }
        }
        let mut tape = Tape::new();
        let loss = stepwise_loss(&model, r, StepWeights::Uniform, true, &mut tape).unwrap();
        assert!((tape.value(loss).data()[0] - oracle).abs() < 1e-9);
    }
}

#[test]
fn missing_label_is_rejected() {
    let schema = vec![FeatureSchema::binary("f", 0)];
    let model = ModnModel::new(schema, vec!["d".into()], ModelConfig::with_state_dim(4), 1).unwrap();
    let record = ConsultationRecord::new("r").answer("f", true, 0);
    assert!(matches!(
        stepwise_loss(&model, &record, StepWeights::Uniform, true, &mut Tape::new()),
        Err(Error::Schema(_))
    ));
}

#[test]
fn simultaneous_shuffle_is_uniform_within_groups() {
    let record = ConsultationRecord::new("r")
        .answer("x", true, 0)
        .answer("a", true, 1)
        .answer("b", true, 1)
        .answer("c", true, 1)
        .answer("y", true, 2);
    let trials = 10_000;
    let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
    for seed in 0..trials {
        let out = shuffle_simultaneous(&record, seed);
        let ids: Vec<String> = out.feature_ids().map(str::to_string).collect();
        assert_eq!(ids[0], "x");
        assert_eq!(ids[4], "y");
        *counts.entry(ids[1..4].to_vec()).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    for c in counts.values() {
        let share = *c as f64 / trials as f64;
        assert!((share - 1.0 / 6.0).abs() < 0.02, "share {share}");
    }
}

#[test]
fn fully_frozen_training_leaves_parameters_untouched() {
    let table = generate_synthetic(&small_spec(1)).unwrap();
    let model = ModnModel::new(table.schema.clone(), table.targets.clone(), ModelConfig::with_state_dim(8), 2).unwrap();
    let mut with_stats = model.clone();
    with_stats.fill_normalization(&table.normalization_stats());
    let (trained, report) = train(&with_stats, &table, &table, &small_config(), &FreezeMask::everything(&with_stats)).unwrap();
    assert_eq!(trained.to_bytes().unwrap(), with_stats.to_bytes().unwrap());
    assert_eq!(report.epochs_run(), 1);
}

#[test]
fn training_is_deterministic() {
    let table = generate_synthetic(&small_spec(4)).unwrap();
    let (a, ra) = train_from_scratch(&table, &table, &small_config(), 11).unwrap();
    let (b, rb) = train_from_scratch(&table, &table, &small_config(), 11).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_eq!(ra, rb);
}

#[test]
fn full_batch_sgd_decreases_loss() {
    let spec = SyntheticSpec {
        group_size: 1,
        ..small_spec(5)
    };
    let table = generate_synthetic(&spec).unwrap();
    let config = TrainConfig {
        epochs: 10,
        batch_size: table.len(),
        optimizer: OptimizerConfig::sgd(0.05),
        ..small_config()
    };
    let (_, report) = train_from_scratch(&table, &DatasetTable::new(table.schema.clone(), table.targets.clone(), vec![], "empty").unwrap(), &config, 3).unwrap();
    assert_eq!(report.epochs_run(), 10);
    for w in report.train_loss.windows(2) {
        assert!(w[1] < w[0], "{:?}", report.train_loss);
    }
}

#[test]
fn training_learns_a_linear_rule() {
    let spec = SyntheticSpec {
        n_records: 400,
        ..small_spec(6)
    };
    let table = generate_synthetic(&spec).unwrap();
    let config = TrainConfig {
        epochs: 40,
        optimizer: OptimizerConfig::adam(1e-2),
        ..small_config()
    };
    let (model, report) = train_from_scratch(&table, &table, &config, 1).unwrap();
    assert!(report.train_loss.last().unwrap() < &report.train_loss[0]);
    let f1 = crate::experiments::predict_table(&model, &table, 0.5)
        .unwrap()
        .overall_f1()
        .unwrap();
    assert!(f1 > 0.8, "train F1 {f1}");
}

fn port_setup() -> (ModnModel, DatasetTable, Vec<FeatureSchema>) {
    let full = generate_synthetic(&SyntheticSpec {
        n_continuous: 4,
        n_binary: 3,
        n_categorical: 3,
        ..small_spec(8)
    })
    .unwrap();
    let new: Vec<FeatureSchema> = full.schema[6..].to_vec();
    let removed: Vec<String> = new.iter().map(|f| f.id.clone()).collect();
    let source_data = full.without_features(&removed);
    let (source, _) = train_from_scratch(&source_data, &source_data, &small_config(), 4).unwrap();
    (source, full, new)
}

#[test]
fn fine_tune_adds_encoders_and_rejects_overlap() {
    let (source, full, new) = port_setup();
    assert_eq!(source.schema().len(), 6);
    let tuned = fine_tune(&source, &full, &full, &new, &small_config()).unwrap();
    assert_eq!(tuned.schema().len(), 10);
    for f in &full.schema {
        tuned.encoder(&f.id).unwrap();
    }
    let clash = vec![source.schema()[0].clone()];
    assert!(matches!(
        fine_tune(&source, &full, &full, &clash, &small_config()),
        Err(Error::Schema(_))
    ));
}

#[test]
fn modular_update_preserves_existing_behaviour() {
    let (source, full, new) = port_setup();
    let updated = modular_update(&source, &full, &full, &new, &small_config()).unwrap();
    for name in source.params().names() {
        let a = source.params().value(source.params().require(name).unwrap());
        let b = updated.params().value(updated.params().require(name).unwrap());
        let bits = |t: &crate::autodiff::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b), "{name} changed");
    }
    let new_ids: Vec<String> = new.iter().map(|f| f.id.clone()).collect();
    let changed = new_ids.iter().any(|f| {
        let id = updated.params().require(&format!("enc.{f}.w0")).unwrap();
        let fresh = {
            let mut m = source.clone();
            for g in &new {
                m.add_feature(g.clone()).unwrap();
            }
            m.params().value(m.params().require(&format!("enc.{f}.w0")).unwrap()).clone()
        };
        *updated.params().value(id) != fresh
    });
    assert!(changed, "new encoders were not trained");
    for r in &full.without_features(&new_ids).records {
        assert_eq!(source.run_consultation(r).unwrap(), updated.run_consultation(r).unwrap());
    }
}

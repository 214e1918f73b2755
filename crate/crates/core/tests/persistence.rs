use modn::data::{generate_synthetic, ConsultationRecord, SyntheticSpec};
use modn::model::{load_model, FingerprintPolicy, LoadOptions, ModelConfig, ModnModel};
use modn::training::{train_from_scratch, TrainConfig};
use modn::Error;

fn trained() -> ModnModel {
    let table = generate_synthetic(&SyntheticSpec {
        n_records: 120,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let config = TrainConfig {
        epochs: 2,
        model: ModelConfig::with_state_dim(8),
        ..Default::default()
    };
    train_from_scratch(&table, &table, &config, 1).unwrap().0
}

#[test]
fn saved_models_reload_bit_for_bit() {
    let model = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.modn");
    model.save(&path).unwrap();
    let back = load_model(&path, &LoadOptions::expecting(model.fingerprint())).unwrap();
    assert_eq!(back.to_bytes().unwrap(), model.to_bytes().unwrap());
    let r = ConsultationRecord::new("x").answer("k0", "L1", 0).answer("c1", 0.3, 0);
    assert_eq!(back.run_consultation(&r).unwrap(), model.run_consultation(&r).unwrap());
}

#[test]
fn flipped_bytes_and_truncation_are_detected() {
    let bytes = trained().to_bytes().unwrap();
    let opts = LoadOptions::default();
    for i in (0..bytes.len()).step_by(97) {
        let mut bad = bytes.clone();
        bad[i] ^= 0x40;
        assert!(ModnModel::from_bytes(&bad, &opts).is_err(), "flip at byte {i} went unnoticed");
    }
    assert!(ModnModel::from_bytes(&bytes[..bytes.len() - 1], &opts).is_err());
}

#[test]
fn fingerprint_mismatch_rejects_or_warns() {
    let bytes = trained().to_bytes().unwrap();
    let mut opts = LoadOptions::expecting("0".repeat(64));
    assert!(matches!(ModnModel::from_bytes(&bytes, &opts), Err(Error::Fingerprint { .. })));
    opts.policy = FingerprintPolicy::Warn;
    assert!(ModnModel::from_bytes(&bytes, &opts).is_ok());
}

//! Generate a synthetic dataset, train a modular network, evaluate it on a
//! held-out split, and round-trip the model through a file.
//!
//! ```text
//! cargo run --release -p modn --example train_synthetic
//! ```

use modn::data::{generate_synthetic_with_rule, holdout, SyntheticSpec};
use modn::experiments::predict_table;
use modn::model::{load_model, LoadOptions, ModelConfig};
use modn::training::{train_from_scratch, TrainConfig};

fn main() -> modn::Result<()> {
    let spec = SyntheticSpec {
        n_records: 1500,
        n_targets: 3,
        missingness: 0.2,
        seed: 7,
        ..Default::default()
    };
    let (table, rule) = generate_synthetic_with_rule(&spec)?;
    println!(
        "{} records, {} features, label rates {:?}, rule {:?}",
        table.len(),
        table.schema.len(),
        table.label_rates(),
        rule.rule
    );

    let (rest, test_idx) = holdout(table.len(), 0.2, 1);
    let pool = table.subset(&rest, "pool");
    let (train_idx, val_idx) = holdout(pool.len(), 0.125, 2);
    let (train, val, test) = (
        pool.subset(&train_idx, "train"),
        pool.subset(&val_idx, "validation"),
        table.subset(&test_idx, "test"),
    );

    let config = TrainConfig {
        epochs: 60,
        patience: Some(10),
        model: ModelConfig::with_state_dim(16),
        ..Default::default()
    };
    let (model, report) = train_from_scratch(&train, &val, &config, 3)?;
    println!(
        "ran {} epochs, best epoch {}, validation loss {:.4}",
        report.epochs_run(),
        report.best_epoch,
        report.val_loss[report.best_epoch]
    );

    let preds = predict_table(&model, &test, config.threshold)?;
    for (t, f1) in preds.targets.iter().zip(preds.per_target_f1()?) {
        println!("  {t}: macro F1 {f1:.3}");
    }
    println!("  overall: {:.3}", preds.overall_f1()?);

    let path = std::env::temp_dir().join("modn-example.modn");
    model.save(&path)?;
    let reloaded = load_model(&path, &LoadOptions::expecting(model.fingerprint()))?;
    let same = test
        .records
        .iter()
        .all(|r| model.predict(r).ok() == reloaded.predict(r).ok());
    println!("saved to {}; reloaded predictions identical: {same}", path.display());
    Ok(())
}

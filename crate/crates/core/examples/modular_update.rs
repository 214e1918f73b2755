//! Porting a trained model to a site that collects extra questions:
//! modular fine-tuning retrains everything, modular update trains only the
//! new encoders and leaves every existing prediction untouched.
//!
//! ```text
//! cargo run --release -p modn --example modular_update
//! ```

use modn::data::{generate_synthetic, simulate_iio_split, SplitSizes, SyntheticSpec};
use modn::experiments::{predict_table, static_view};
use modn::model::ModelConfig;
use modn::training::{fine_tune, modular_update, train_from_scratch, TrainConfig};

fn main() -> modn::Result<()> {
    let full = generate_synthetic(&SyntheticSpec {
        n_records: 1500,
        n_targets: 3,
        seed: 12,
        ..Default::default()
    })?;
    let split = simulate_iio_split(&full, 0.6, SplitSizes::default_for(full.len()), 5)?;
    println!(
        "source has {} features, target adds {:?}",
        split.source.schema.len(),
        split.deleted_features
    );

    let config = TrainConfig {
        epochs: 30,
        patience: Some(5),
        model: ModelConfig::with_state_dim(16),
        ..Default::default()
    };
    let (source, _) = train_from_scratch(&split.source, &split.source, &config, 1)?;
    let new: Vec<_> = split
        .deleted_features
        .iter()
        .filter_map(|id| full.feature(id).cloned())
        .collect();
    let tuned = fine_tune(&source, &split.target, &split.target, &new, &config)?;
    let updated = modular_update(&source, &split.target, &split.target, &new, &config)?;

    let score = |m: &modn::model::ModnModel, t: &modn::data::DatasetTable| {
        predict_table(m, t, 0.5).and_then(|p| p.overall_f1())
    };
    println!("static (source only, shared questions): {:.3}", score(&source, &static_view(&split))?);
    println!("modular fine-tuning (all questions):    {:.3}", score(&tuned, &split.test)?);
    println!("modular update (all questions):         {:.3}", score(&updated, &split.test)?);

    let shared_only = static_view(&split);
    let unchanged = shared_only
        .records
        .iter()
        .all(|r| source.run_consultation(r).ok() == updated.run_consultation(r).ok());
    println!("update left every shared-question trajectory unchanged: {unchanged}");
    Ok(())
}

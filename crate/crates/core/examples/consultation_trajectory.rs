//! A consultation answered one question at a time, with the predicted
//! probability of every diagnosis after each answer.
//!
//! ```text
//! cargo run -p modn --example consultation_trajectory
//! ```

use modn::data::{generate_synthetic, ConsultationRecord, SyntheticSpec};
use modn::model::{ModelConfig, TrajectoryDump};
use modn::training::{train_from_scratch, TrainConfig};

fn main() -> modn::Result<()> {
    let table = generate_synthetic(&SyntheticSpec {
        n_records: 600,
        n_targets: 3,
        seed: 4,
        ..Default::default()
    })?;
    let config = TrainConfig {
        epochs: 15,
        model: ModelConfig::with_state_dim(16),
        ..Default::default()
    };
    let (model, _) = train_from_scratch(&table, &table, &config, 0)?;

    // Any subset of questions, in any order; unanswered ones are simply skipped.
    let patient = ConsultationRecord::new("walk-in")
        .answer("k1", "L2", 0)
        .answer("c0", 1.4, 0)
        .answer("b2", true, 0)
        .answer("c3", -0.6, 1);
    let trajectory = model.run_consultation(&patient)?;

    print!("{:<10}", "step");
    for t in &trajectory.targets {
        print!("{t:>8}");
    }
    println!();
    for step in &trajectory.steps {
        let label = match (&step.feature_id, &step.answer) {
            (Some(f), Some(a)) => format!("{f}={a}"),
            _ => "initial".to_string(),
        };
        print!("{label:<10}");
        for p in &step.probabilities {
            let mark = if *p >= 0.5 { '+' } else { ' ' };
            print!("{p:>7.3}{mark}");
        }
        println!();
    }

    let dump = TrajectoryDump::new(&model, &trajectory, 0.5);
    println!("\nJSON form (as served over HTTP):\n{}", serde_json::to_string_pretty(&dump.steps[1])?);
    Ok(())
}

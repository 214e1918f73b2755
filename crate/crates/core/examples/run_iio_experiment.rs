//! Runs the interoperability experiment on synthetic data and prints the
//! results table.
//!
//! ```text
//! cargo run --release -p modn --example run_iio_experiment -- [seeds] [epochs] [out_dir]
//! ```

use std::time::Instant;

use modn::data::{SplitSizes, SyntheticSpec};
use modn::experiments::{run_iio_experiment, DatasetSource, ExperimentConfig, Scenario};
use modn::model::ModelConfig;
use modn::training::TrainConfig;

fn main() -> modn::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let output = args.next().map(Into::into);

    let config = ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            spec: SyntheticSpec {
                n_records: 2000,
                n_targets: 3,
                ..Default::default()
            },
        },
        overlaps: vec![0.6, 0.8, 1.0],
        sizes: Some(SplitSizes::default_for(2000)),
        scenarios: Scenario::ALL.to_vec(),
        seeds: (0..n_seeds).collect(),
        train: TrainConfig {
            epochs,
            patience: Some(5),
            model: ModelConfig::with_state_dim(16),
            ..Default::default()
        },
        val_fraction: 0.125,
        level: 0.95,
        output,
        save_models: false,
        trajectory_records: Vec::new(),
    };

    let start = Instant::now();
    let table = run_iio_experiment(&config)?;
    print!("{}", table.render());
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());

    for &o in &config.overlaps {
        let m = |s| table.mean(s, o).unwrap_or(f64::NAN);
        println!(
            "overlap {o}: global {:.3}  fine_tune {:.3}  modular_update {:.3}  static {:.3}  local {:.3}",
            m(Scenario::Global),
            m(Scenario::FineTune),
            m(Scenario::ModularUpdate),
            m(Scenario::Static),
            m(Scenario::Local)
        );
    }
    Ok(())
}

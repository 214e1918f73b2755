//! 5x2 cross-validation of the modular network against logistic regression
//! and a monolithic MLP (both on mean/mode-imputed inputs), with paired
//! t-tests between every pair of methods.
//!
//! ```text
//! cargo run --release -p modn --example compare_baselines -- [logistic|xor]
//! ```

use modn::autodiff::OptimizerConfig;
use modn::data::{generate_synthetic, LabelRule, SyntheticSpec};
use modn::experiments::{compare_methods, BaselineConfig, Method, TTestMode};
use modn::model::ModelConfig;
use modn::training::TrainConfig;

fn main() -> modn::Result<()> {
    let rule = match std::env::args().nth(1).as_deref() {
        Some("xor") => LabelRule::Xor,
        _ => LabelRule::Logistic,
    };
    let table = generate_synthetic(&SyntheticSpec {
        n_records: 800,
        n_targets: 2,
        missingness: 0.1,
        label_rule: rule,
        seed: 1,
        ..Default::default()
    })?;
    let methods = [
        Method::Modn {
            config: TrainConfig {
                epochs: 120,
                patience: Some(30),
                optimizer: OptimizerConfig::adam(3e-3),
                model: ModelConfig::with_state_dim(16),
                ..Default::default()
            },
            val_fraction: 0.125,
        },
        Method::LogReg {
            config: BaselineConfig::default(),
        },
        Method::Mlp {
            config: BaselineConfig::default(),
        },
    ];
    let comparison = compare_methods(&table, &methods, 0, TTestMode::Paired, 0.05)?;
    print!("{}", comparison.render());

    let corrected = compare_methods(&table, &methods[1..], 0, TTestMode::FiveByTwo, 0.05)?;
    let t = corrected.test("overall", "LogReg", "MLP").expect("pair exists");
    println!("variance-corrected 5x2cv test, LogReg vs MLP: t = {:.3}, p = {:.4}", t.test.t, t.test.p);
    Ok(())
}

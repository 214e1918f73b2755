//! Reverse-mode gradients on a small MLP, checked against central finite
//! differences, then used to fit a toy regression with Adam.
//!
//! ```text
//! cargo run -p modn --example gradient_check
//! ```

use modn::autodiff::{
    grad_check, HiddenActivation, Mlp, MlpSpec, NamedLoss, Optimizer, OptimizerConfig, OutputActivation, ParamStore,
    Tape, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> modn::Result<()> {
    let spec = MlpSpec::new(vec![4, 8, 3], HiddenActivation::Tanh, OutputActivation::Sigmoid)?;
    for seed in 0..3 {
        let err = grad_check(&spec, NamedLoss::Bce, seed)?;
        println!("seed {seed}: worst relative gradient error {err:.2e}");
    }

    // Fit y = sin(x) on a handful of points.
    let spec = MlpSpec::new(vec![1, 16, 1], HiddenActivation::Tanh, OutputActivation::Identity)?;
    let mut params = ParamStore::new(0);
    let net = Mlp::init(spec, &mut params, "net", &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut opt = Optimizer::new(OptimizerConfig::adam(1e-2))?;
    let xs: Vec<f64> = (0..20).map(|i| -3.0 + 6.0 * i as f64 / 19.0).collect();
    for epoch in 0..=1500 {
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for &x in &xs {
            let input = tape.constant(Tensor::vector(vec![x]));
            let y = net.forward(&params, input, &mut tape)?;
            terms.push(tape.squared_error(y, &[x.sin()])?);
        }
        let total = tape.sum(&terms)?;
        let loss = tape.scale(total, 1.0 / xs.len() as f64);
        if epoch % 300 == 0 {
            println!("epoch {epoch:>4}: mse {:.5}", tape.value(loss).data()[0]);
        }
        tape.backward(loss, &mut params)?;
        opt.step(&mut params);
    }
    let probe = 1.0;
    println!("net(1.0) = {:.4}, sin(1.0) = {:.4}", net.eval(&params, &[probe])?[0], probe.sin());
    Ok(())
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec, OutputActivation};
use super::params::ParamStore;
use super::tape::Tape;
use super::tensor::{bce_with_logit, Tensor};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedLoss {
    /// `sum((y - t)^2)` on the activated output.
    Squared,
    /// Logistic loss on the pre-activation; targets in {0, 1}.
    Bce,
}

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

fn loss_value(mlp: &Mlp, params: &ParamStore, x: &[f64], t: &[f64], loss: NamedLoss) -> f64 {
    match loss {
        NamedLoss::Squared => {
            let y = mlp.eval(params, x).expect("shapes fixed by construction");
            y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()
        }
        NamedLoss::Bce => {
            let z = mlp.eval_logits(params, x).expect("shapes fixed by construction");
            z.iter().zip(t).map(|(&z, &y)| bce_with_logit(z, y)).sum()
        }
    }
}

/// Builds a random network, input, and target from `seed`, then returns the
/// worst relative error between tape gradients and central differences over
/// every parameter entry.
pub fn grad_check(spec: &MlpSpec, loss: NamedLoss, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new(seed);
    let mlp = Mlp::init(spec.clone(), &mut params, "net", &mut rng)?;
    // Non-zero biases so every term of the backward rule is exercised.
    for id in mlp.param_ids().collect::<Vec<_>>() {
        for v in params.value_mut(id).data_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    let x: Vec<f64> = (0..spec.input_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let t: Vec<f64> = (0..spec.output_dim())
        .map(|_| match loss {
            NamedLoss::Bce => f64::from(rng.gen_bool(0.5) as u8),
            NamedLoss::Squared => rng.gen_range(-1.0..1.0),
        })
        .collect();

    let mut tape = Tape::new();
    let input = tape.constant(Tensor::vector(x.clone()));
    let out = match (loss, spec.output_activation) {
        (NamedLoss::Bce, _) => {
            let z = mlp.forward_logits(&params, input, &mut tape)?;
            tape.bce_with_logits(z, &t)?
        }
        (NamedLoss::Squared, OutputActivation::Identity | OutputActivation::Sigmoid) => {
            let y = mlp.forward(&params, input, &mut tape)?;
            tape.squared_error(y, &t)?
        }
    };
    tape.backward(out, &mut params)?;

    let mut worst: f64 = 0.0;
    for id in mlp.param_ids().collect::<Vec<_>>() {
        for k in 0..params.value(id).len() {
            let analytic = params.grad(id).data()[k];
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = loss_value(&mlp, &params, &x, &t, loss);
            params.value_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = loss_value(&mlp, &params, &x, &t, loss);
            params.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let scale = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

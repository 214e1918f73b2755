//! Monolithic baselines: per-target logistic regression and MLP classifiers
//! over mean/mode-imputed fixed-width vectors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::PredictionSet;
use crate::autodiff::{
    HiddenActivation, Mlp, MlpSpec, Optimizer, OptimizerConfig, OutputActivation, ParamStore, Tape,
    Tensor,
};
use crate::data::{holdout, DatasetTable, Imputer};
use crate::error::{Error, Result};
use crate::model::{module_seed, DEFAULT_THRESHOLD};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Training mean for continuous features, training mode otherwise.
    #[default]
    MeanMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub learning_rates: Vec<f64>,
    /// Hidden widths tried by the MLP; ignored by logistic regression.
    pub hidden_widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: Option<usize>,
    /// Share of the training records held out for model selection.
    pub val_fraction: f64,
    pub threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            learning_rates: vec![1e-2, 1e-3],
            hidden_widths: vec![16, 64],
            epochs: 100,
            batch_size: 16,
            patience: Some(10),
            val_fraction: 0.125,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() {
            return Err(Error::Config("baseline grid needs at least one learning rate".into()));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config("baseline hidden widths must be non-empty and positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("baseline epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// A trained single-target classifier.
#[derive(Clone, Debug)]
enum Classifier {
    /// Emits a fixed probability regardless of input.
    Constant(f64),
    Net { params: ParamStore, mlp: Mlp },
}

impl Classifier {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Classifier::Constant(p) => Ok(*p),
            Classifier::Net { params, mlp } => Ok(mlp.eval(params, x)?[0]),
        }
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn mean_bce(c: &Classifier, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        total += bce(c.predict(xi)?, yi);
    }
    Ok(total / x.len().max(1) as f64)
}

struct Fit {
    classifier: Classifier,
    val_loss: f64,
}

#[allow(clippy::too_many_arguments)]
fn fit_net(
    spec: MlpSpec,
    lr: f64,
    x: &[Vec<f64>],
    y: &[f64],
    vx: &[Vec<f64>],
    vy: &[f64],
    config: &BaselineConfig,
    seed: u64,
) -> Result<Fit> {
    let mut params = ParamStore::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mlp = Mlp::init(spec, &mut params, "net", &mut rng)?;
    let mut opt = Optimizer::new(OptimizerConfig::adam(lr))?;
    let (mx, my) = if vx.is_empty() { (x, y) } else { (vx, vy) };

    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut tape = Tape::new();
                let input = tape.constant(Tensor::vector(x[i].clone()));
                let z = mlp.forward_logits(&params, input, &mut tape)?;
                let loss = tape.bce_with_logits(z, &y[i..i + 1])?;
                let loss = tape.scale(loss, scale);
                tape.backward(loss, &mut params)?;
            }
            opt.step(&mut params);
        }
        let current = Classifier::Net {
            params: params.clone(),
            mlp: mlp.clone(),
        };
        let monitor = mean_bce(&current, mx, my)?;
        if best.as_ref().is_none_or(|(b, _)| monitor < *b) {
            best = Some((monitor, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let (val_loss, params) = best.expect("at least one epoch ran");
    Ok(Fit {
        classifier: Classifier::Net { params, mlp },
        val_loss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    LogReg,
    Mlp,
}

fn fit_target(
    family: Family,
    x: &[Vec<f64>],
    y: &[f64],
    config: &BaselineConfig,
    target: &str,
    seed: u64,
) -> Result<Classifier> {
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y.len() {
        log::warn!(
            "target `{target}` has a single class in the training data; using a constant classifier"
        );
        let p = if positives == 0 { 1e-6 } else { 1.0 - 1e-6 };
        return Ok(Classifier::Constant(p));
    }
    let width = x.first().map_or(0, Vec::len);
    if width == 0 {
        return Ok(Classifier::Constant(positives as f64 / y.len() as f64));
    }

    let (keep, out) = holdout(x.len(), config.val_fraction, seed);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (tx, ty) = pick(&keep);
    let (vx, vy) = pick(&out);

    let mut candidates = Vec::new();
    for &lr in &config.learning_rates {
        match family {
            Family::LogReg => candidates.push((
                MlpSpec::new(vec![width, 1], HiddenActivation::Tanh, OutputActivation::Sigmoid)?,
                lr,
            )),
            Family::Mlp => {
                for &h in &config.hidden_widths {
                    candidates.push((
                        MlpSpec::new(
                            vec![width, h, 1],
                            HiddenActivation::Tanh,
                            OutputActivation::Sigmoid,
                        )?,
                        lr,
                    ));
                }
            }
        }
    }

    let mut best: Option<Fit> = None;
    for (spec, lr) in candidates {
        let fit = fit_net(spec, lr, &tx, &ty, &vx, &vy, config, seed)?;
        if best.as_ref().is_none_or(|b| fit.val_loss < b.val_loss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("grid is non-empty").classifier)
}

fn run_baseline(
    family: Family,
    train: &DatasetTable,
    test: &DatasetTable,
    imputation: Imputation,
    config: &BaselineConfig,
    seed: u64,
) -> Result<PredictionSet> {
    config.validate()?;
    let Imputation::MeanMode = imputation;
    if train.schema != test.schema || train.targets != test.targets {
        return Err(Error::Schema(
            "baseline train and test tables must share a schema".into(),
        ));
    }
    let imputer = Imputer::fit(train)?;
    let x = imputer.transform_all(train)?;
    let tx = imputer.transform_all(test)?;

    let mut classifiers = Vec::with_capacity(train.targets.len());
    for target in &train.targets {
        let y: Vec<f64> = train
            .records
            .iter()
            .map(|r| {
                r.labels
                    .get(target)
                    .map(|&v| f64::from(v))
                    .ok_or_else(|| Error::Schema(format!("record `{}` has no label for `{target}`", r.id)))
            })
            .collect::<Result<_>>()?;
        let s = module_seed(seed, &format!("baseline.{target}"));
        classifiers.push(fit_target(family, &x, &y, config, target, s)?);
    }

    let mut out = PredictionSet::new(train.targets.clone(), config.threshold);
    for (r, xi) in test.records.iter().zip(&tx) {
        let probs = classifiers
            .iter()
            .map(|c| c.predict(xi))
            .collect::<Result<Vec<_>>>()?;
        let labels = test
            .targets
            .iter()
            .map(|t| r.labels.get(t) == Some(&1))
            .collect();
        out.push(r.id.clone(), probs, labels);
    }
    Ok(out)
}

/// One logistic regression per target, the learning rate picked on a
/// held-out slice of `train`.
pub fn baseline_logreg(
    train: &DatasetTable,
    test: &DatasetTable,
    imputation: Imputation,
    config: &BaselineConfig,
    seed: u64,
) -> Result<PredictionSet> {
    run_baseline(Family::LogReg, train, test, imputation, config, seed)
}

/// One single-hidden-layer MLP per target, learning rate and width picked
/// on a held-out slice of `train`.
pub fn baseline_mlp(
    train: &DatasetTable,
    test: &DatasetTable,
    imputation: Imputation,
    config: &BaselineConfig,
    seed: u64,
) -> Result<PredictionSet> {
    run_baseline(Family::Mlp, train, test, imputation, config, seed)
}

//! 5x2 cross-validation and the method comparison table built on it.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baselines::{baseline_logreg, baseline_mlp, BaselineConfig, Imputation};
use super::metrics::{overall_f1, PredictionSet};
use super::stats::{mean_ci, t_test, MeanCi, TTest, TTestMode};
use crate::data::{holdout, DatasetTable};
use crate::error::{Error, Result};
use crate::model::module_seed;
use crate::training::{train_from_scratch, TrainConfig};

pub const CV_REPETITIONS: usize = 5;

/// The ten `(train, test)` index pairs of 5x2 CV, ordered repetition by
/// repetition with fold 1 before fold 2.
pub fn cv_5x2_folds(n: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n < 4 {
        return Err(Error::EmptyDataset(format!(
            "5x2 cross-validation needs at least 4 records, got {n}"
        )));
    }
    let mut folds = Vec::with_capacity(2 * CV_REPETITIONS);
    for rep in 0..CV_REPETITIONS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(module_seed(seed, &format!("cv5x2.{rep}"))));
        let (a, b) = order.split_at(n / 2);
        folds.push((a.to_vec(), b.to_vec()));
        folds.push((b.to_vec(), a.to_vec()));
    }
    Ok(folds)
}

/// Scores from the ten folds, in fold order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    pub targets: Vec<String>,
    /// `per_target[fold][target]`
    pub per_target: Vec<Vec<f64>>,
    pub overall: Vec<f64>,
}

impl CvScores {
    pub fn target_scores(&self, t: usize) -> Vec<f64> {
        self.per_target.iter().map(|fold| fold[t]).collect()
    }
}

/// Runs `fit_predict(train, test, fold_seed)` on each of the ten folds.
pub fn cv_5x2<F>(dataset: &DatasetTable, seed: u64, fit_predict: F) -> Result<CvScores>
where
    F: Fn(&DatasetTable, &DatasetTable, u64) -> Result<PredictionSet>,
{
    let folds = cv_5x2_folds(dataset.len(), seed)?;
    let mut per_target = Vec::with_capacity(folds.len());
    let mut overall = Vec::with_capacity(folds.len());
    for (k, (train_idx, test_idx)) in folds.iter().enumerate() {
        let train = dataset.subset(train_idx, format!("cv fold {k} train"));
        let test = dataset.subset(test_idx, format!("cv fold {k} test"));
        let preds = fit_predict(&train, &test, module_seed(seed, &format!("cv5x2.fit{k}")))?;
        let scores = preds.per_target_f1()?;
        overall.push(overall_f1(&scores));
        per_target.push(scores);
    }
    Ok(CvScores {
        targets: dataset.targets.clone(),
        per_target,
        overall,
    })
}

/// A classifier family that can be cross-validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Modn {
        config: TrainConfig,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    LogReg { config: BaselineConfig },
    Mlp { config: BaselineConfig },
}

fn default_val_fraction() -> f64 {
    0.125
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Modn { .. } => "MoDN",
            Method::LogReg { .. } => "LogReg",
            Method::Mlp { .. } => "MLP",
        }
    }

    pub fn fit_predict(&self, train: &DatasetTable, test: &DatasetTable, seed: u64) -> Result<PredictionSet> {
        match self {
            Method::Modn { config, val_fraction } => modn_fit_predict(train, test, config, *val_fraction, seed),
            Method::LogReg { config } => baseline_logreg(train, test, Imputation::MeanMode, config, seed),
            Method::Mlp { config } => baseline_mlp(train, test, Imputation::MeanMode, config, seed),
        }
    }
}

/// Trains a fresh modular network on `train` (a slice held out for early
/// stopping) and predicts every `test` record.
pub fn modn_fit_predict(
    train: &DatasetTable,
    test: &DatasetTable,
    config: &TrainConfig,
    val_fraction: f64,
    seed: u64,
) -> Result<PredictionSet> {
    let (keep, out) = holdout(train.len(), val_fraction, module_seed(seed, "val"));
    let tr = train.subset(&keep, "train");
    let va = train.subset(&out, "validation");
    let mut config = config.clone();
    config.shuffle_seed = module_seed(seed, "shuffle");
    let (model, _) = train_from_scratch(&tr, &va, &config, seed)?;
    let mut preds = PredictionSet::new(model.targets().to_vec(), config.threshold);
    for r in &test.records {
        let labels = model.targets().iter().map(|t| r.labels.get(t) == Some(&1)).collect();
        preds.push(r.id.clone(), model.predict(r)?, labels);
    }
    Ok(preds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub method: String,
    /// A target id, or `"overall"`.
    pub target: String,
    pub ci: MeanCi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvTest {
    pub target: String,
    pub method_a: String,
    pub method_b: String,
    pub test: TTest,
    pub significant: bool,
}

/// Per-method, per-target cross-validated macro F1 with pairwise tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvComparison {
    pub targets: Vec<String>,
    pub methods: Vec<String>,
    pub scores: Vec<CvScores>,
    pub cells: Vec<CvCell>,
    pub tests: Vec<CvTest>,
    pub alpha: f64,
    pub mode: TTestMode,
}

pub const OVERALL: &str = "overall";

impl CvComparison {
    pub fn cell(&self, method: &str, target: &str) -> Option<&CvCell> {
        self.cells.iter().find(|c| c.method == method && c.target == target)
    }

    pub fn test(&self, target: &str, a: &str, b: &str) -> Option<&CvTest> {
        self.tests
            .iter()
            .find(|t| t.target == target && t.method_a == a && t.method_b == b)
    }

    /// Plain-text table: one row per target plus an overall row, one column
    /// per method. A `*` marks a method significantly different from the
    /// first method on that row.
    pub fn render(&self) -> String {
        let mut rows: Vec<&str> = self.targets.iter().map(String::as_str).collect();
        rows.push(OVERALL);
        let mut s = format!("{:<12}", "target");
        for m in &self.methods {
            let _ = write!(s, " {:>24}", m);
        }
        s.push('\n');
        for target in rows {
            let _ = write!(s, "{target:<12}");
            for (k, m) in self.methods.iter().enumerate() {
                let c = self.cell(m, target).expect("every cell is filled");
                let flag = if k > 0
                    && self
                        .test(target, &self.methods[0], m)
                        .is_some_and(|t| t.significant)
                {
                    "*"
                } else {
                    " "
                };
                let text = format!("{:.3} [{:.3}, {:.3}]{flag}", c.ci.mean, c.ci.lo, c.ci.hi);
                let _ = write!(s, " {text:>24}");
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "* differs from {} at p < {} ({:?} t-test over 10 folds)",
            self.methods.first().map_or("", String::as_str),
            self.alpha,
            self.mode
        );
        s
    }
}

/// Cross-validates every method on the same folds and tests every method
/// pair on every target and on the overall score.
pub fn compare_methods(
    dataset: &DatasetTable,
    methods: &[Method],
    seed: u64,
    mode: TTestMode,
    alpha: f64,
) -> Result<CvComparison> {
    if methods.is_empty() {
        return Err(Error::Config("no methods to compare".into()));
    }
    let scores = methods
        .iter()
        .map(|m| cv_5x2(dataset, seed, |tr, te, s| m.fit_predict(tr, te, s)))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = methods.iter().map(|m| m.name().to_string()).collect();

    let series = |s: &CvScores, t: Option<usize>| match t {
        Some(t) => s.target_scores(t),
        None => s.overall.clone(),
    };
    let mut rows: Vec<(String, Option<usize>)> = dataset
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), Some(i)))
        .collect();
    rows.push((OVERALL.to_string(), None));

    let mut cells = Vec::new();
    let mut tests = Vec::new();
    for (label, t) in &rows {
        for (name, s) in names.iter().zip(&scores) {
            cells.push(CvCell {
                method: name.clone(),
                target: label.clone(),
                ci: mean_ci(&series(s, *t), 0.95)?,
            });
        }
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                let test = t_test(&series(&scores[i], *t), &series(&scores[j], *t), mode)?;
                tests.push(CvTest {
                    target: label.clone(),
                    method_a: names[i].clone(),
                    method_b: names[j].clone(),
                    significant: test.significant(alpha),
                    test,
                });
            }
        }
    }
    Ok(CvComparison {
        targets: dataset.targets.clone(),
        methods: names,
        scores,
        cells,
        tests,
        alpha,
        mode,
    })
}

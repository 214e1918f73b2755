//! The imperfect-interoperability experiment: source/target/test splits at
//! several feature overlaps, every porting scenario, aggregated over seeds.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::PredictionSet;
use super::results::{ExportFormat, ResultRow, ResultsTable, Scenario};
use crate::data::{
    generate_synthetic, holdout, load_dataset, simulate_iio_split, DatasetTable, FeatureSchema,
    IioSplit, SplitSizes, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::model::{module_seed, ModnModel, TrajectoryDump};
use crate::training::{fine_tune, modular_update, train_from_scratch, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { spec: SyntheticSpec },
    Csv { data: PathBuf, schema: PathBuf },
}

impl DatasetSource {
    pub fn load(&self) -> Result<DatasetTable> {
        match self {
            DatasetSource::Synthetic { spec } => generate_synthetic(spec),
            DatasetSource::Csv { data, schema } => load_dataset(data, schema),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub overlaps: Vec<f64>,
    /// Defaults to [`SplitSizes::default_for`] the dataset size.
    #[serde(default)]
    pub sizes: Option<SplitSizes>,
    pub scenarios: Vec<Scenario>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Share of each training partition held out for early stopping.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Directory for results, models, and trajectory dumps.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub save_models: bool,
    /// Test record ids whose trajectories are dumped for every cell.
    #[serde(default)]
    pub trajectory_records: Vec<String>,
}

fn default_val_fraction() -> f64 {
    0.125
}

fn default_level() -> f64 {
    0.95
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("experiment needs at least one scenario".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        if self.overlaps.is_empty() {
            return Err(Error::Config("experiment needs at least one overlap".into()));
        }
        let unique: BTreeSet<_> = self.scenarios.iter().collect();
        if unique.len() != self.scenarios.len() {
            return Err(Error::Config("scenarios are listed more than once".into()));
        }
        for &o in &self.overlaps {
            if !(o > 0.0 && o <= 1.0) {
                return Err(Error::Config(format!("overlap {o} outside (0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        self.train.validate()
    }
}

/// A trained cell model with the test view it was scored on.
struct CellOutput {
    score: f64,
    model: ModnModel,
    test: DatasetTable,
}

/// The test set as the static scenario sees it: every feature deleted from
/// the source is removed from every record.
pub fn static_view(split: &IioSplit) -> DatasetTable {
    let view = split.test.without_features(&split.deleted_features);
    let shared: BTreeSet<String> = split.shared_features().into_iter().collect();
    assert!(
        view.records
            .iter()
            .all(|r| r.feature_ids().all(|f| shared.contains(f))),
        "static test view leaks a feature absent from the source"
    );
    view
}

/// Union of two partitions under `schema`.
fn union(schema: &[FeatureSchema], a: &DatasetTable, b: &DatasetTable, what: &str) -> Result<DatasetTable> {
    let mut records = a.records.clone();
    records.extend(b.records.iter().cloned());
    DatasetTable::new(schema.to_vec(), a.targets.clone(), records, what)
}

pub fn predict_table(model: &ModnModel, table: &DatasetTable, threshold: f64) -> Result<PredictionSet> {
    let mut preds = PredictionSet::new(model.targets().to_vec(), threshold);
    for r in &table.records {
        let labels = model.targets().iter().map(|t| r.labels.get(t) == Some(&1)).collect();
        preds.push(r.id.clone(), model.predict(r)?, labels);
    }
    Ok(preds)
}

fn split_val(table: &DatasetTable, fraction: f64, seed: u64) -> (DatasetTable, DatasetTable) {
    let (keep, out) = holdout(table.len(), fraction, seed);
    (
        table.subset(&keep, format!("train part of {}", table.provenance)),
        table.subset(&out, format!("validation part of {}", table.provenance)),
    )
}

type UnitOutcome = Vec<(Scenario, Result<CellOutput>)>;

fn run_unit(
    full: &DatasetTable,
    overlap: f64,
    seed: u64,
    sizes: SplitSizes,
    config: &ExperimentConfig,
) -> UnitOutcome {
    let split = match simulate_iio_split(full, overlap, sizes, seed) {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return config
                .scenarios
                .iter()
                .map(|&s| (s, Err(Error::Config(msg.clone()))))
                .collect();
        }
    };
    let mut train_config = config.train.clone();
    train_config.shuffle_seed = module_seed(seed, "shuffle");
    let tc = &train_config;
    let threshold = tc.threshold;
    let (a_tr, a_va) = split_val(&split.source, config.val_fraction, module_seed(seed, "val.a"));
    let (b_tr, b_va) = split_val(&split.target, config.val_fraction, module_seed(seed, "val.b"));
    let new_features: Vec<FeatureSchema> = split
        .deleted_features
        .iter()
        .filter_map(|id| full.feature(id).cloned())
        .collect();

    let needs_source = config.scenarios.iter().any(|s| {
        matches!(s, Scenario::Static | Scenario::FineTune | Scenario::ModularUpdate)
    });
    let source = needs_source.then(|| train_from_scratch(&a_tr, &a_va, tc, seed).map(|(m, _)| m));
    let source = source.as_ref().map(|r| r.as_ref().map_err(|e| e.to_string()));
    let need_source = || -> Result<&ModnModel> {
        source
            .clone()
            .expect("source trained when needed")
            .map_err(|e| Error::Contract(format!("source model failed: {e}")))
    };

    let score = |model: ModnModel, test: DatasetTable| -> Result<CellOutput> {
        let score = predict_table(&model, &test, threshold)?.overall_f1()?;
        Ok(CellOutput { score, model, test })
    };

    config
        .scenarios
        .par_iter()
        .map(|&scenario| {
            let out = match scenario {
                Scenario::Static => need_source().and_then(|m| score(m.clone(), static_view(&split))),
                Scenario::Local => train_from_scratch(&b_tr, &b_va, tc, seed)
                    .and_then(|(m, _)| score(m, split.test.clone())),
                Scenario::Global => union(&full.schema, &a_tr, &b_tr, "global train")
                    .and_then(|tr| Ok((tr, union(&full.schema, &a_va, &b_va, "global validation")?)))
                    .and_then(|(tr, va)| train_from_scratch(&tr, &va, tc, seed))
                    .and_then(|(m, _)| score(m, split.test.clone())),
                Scenario::FineTune => need_source()
                    .and_then(|src| fine_tune(src, &b_tr, &b_va, &new_features, tc))
                    .and_then(|m| score(m, split.test.clone())),
                Scenario::ModularUpdate => need_source()
                    .and_then(|src| modular_update(src, &b_tr, &b_va, &new_features, tc))
                    .and_then(|m| score(m, split.test.clone())),
            };
            (scenario, out)
        })
        .collect()
}

fn cell_name(scenario: Scenario, overlap: f64, seed: u64) -> String {
    format!("{}_o{overlap}_s{seed}", scenario.as_str())
}

fn write_cell_artifacts(
    dir: &Path,
    scenario: Scenario,
    overlap: f64,
    seed: u64,
    cell: &CellOutput,
    config: &ExperimentConfig,
) -> Result<()> {
    let name = cell_name(scenario, overlap, seed);
    if config.save_models {
        let models = dir.join("models");
        std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        cell.model.save(&models.join(format!("{name}.modn")))?;
    }
    if !config.trajectory_records.is_empty() {
        let traj_dir = dir.join("trajectories");
        std::fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
        for id in &config.trajectory_records {
            if let Some(r) = cell.test.records.iter().find(|r| &r.id == id) {
                let traj = cell.model.run_consultation(r)?;
                let dump = TrajectoryDump::new(&cell.model, &traj, config.train.threshold);
                let path = traj_dir.join(format!("{name}_{id}.json"));
                std::fs::write(&path, serde_json::to_vec_pretty(&dump)?)
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(())
}

/// Runs every (overlap, seed, scenario) cell on an already loaded dataset.
/// Cells that fail are recorded in their row and do not stop the others.
pub fn run_iio_on(full: &DatasetTable, config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let sizes = config.sizes.unwrap_or_else(|| SplitSizes::default_for(full.len()));
    let units: Vec<(f64, u64)> = config
        .overlaps
        .iter()
        .flat_map(|&o| config.seeds.iter().map(move |&s| (o, s)))
        .collect();
    let outcomes: Vec<((f64, u64), UnitOutcome)> = units
        .par_iter()
        .map(|&(o, s)| ((o, s), run_unit(full, o, s, sizes, config)))
        .collect();

    let mut rows = Vec::new();
    for &overlap in &config.overlaps {
        for &scenario in &config.scenarios {
            let mut scores = Vec::with_capacity(config.seeds.len());
            let mut failures = Vec::new();
            for &seed in &config.seeds {
                let (_, cells) = outcomes
                    .iter()
                    .find(|((o, s), _)| *o == overlap && *s == seed)
                    .expect("every unit ran");
                let (_, result) = cells
                    .iter()
                    .find(|(sc, _)| *sc == scenario)
                    .expect("every scenario ran");
                match result {
                    Ok(cell) => {
                        if let Some(dir) = &config.output {
                            write_cell_artifacts(dir, scenario, overlap, seed, cell, config)?;
                        }
                        scores.push(Some(cell.score));
                    }
                    Err(e) => {
                        log::warn!("cell {} failed: {e}", cell_name(scenario, overlap, seed));
                        failures.push(format!("seed {seed}: {e}"));
                        scores.push(None);
                    }
                }
            }
            rows.push(ResultRow::new(scenario, overlap, scores, failures, config.level));
        }
    }
    let table = ResultsTable::assemble(config.seeds.clone(), config.level, rows);
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        table.export(&dir.join("results.csv"), ExportFormat::Csv)?;
        table.export(&dir.join("results.json"), ExportFormat::Json)?;
    }
    Ok(table)
}

pub fn run_iio_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let full = config.dataset.load()?;
    run_iio_on(&full, config)
}

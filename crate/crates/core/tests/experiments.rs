use std::collections::BTreeSet;

use modn::data::{generate_synthetic, simulate_iio_split, DatasetTable, SplitSizes, SyntheticSpec};
use modn::experiments::{
    baseline_logreg, baseline_mlp, cv_5x2, cv_5x2_folds, run_iio_on, static_view, BaselineConfig, DatasetSource,
    ExperimentConfig, ExportFormat, Imputation, PredictionSet, ResultsTable, Scenario, CSV_HEADER,
};
use modn::model::ModelConfig;
use modn::training::TrainConfig;

fn table(n: usize, seed: u64) -> DatasetTable {
    generate_synthetic(&SyntheticSpec {
        n_records: n,
        n_targets: 2,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn quick_experiment(seeds: Vec<u64>, overlaps: Vec<f64>) -> ExperimentConfig {
    let spec = SyntheticSpec {
        n_records: 300,
        n_targets: 2,
        seed: 5,
        ..Default::default()
    };
    ExperimentConfig {
        dataset: DatasetSource::Synthetic { spec },
        overlaps,
        sizes: None,
        scenarios: Scenario::ALL.to_vec(),
        seeds,
        train: TrainConfig {
            epochs: 2,
            patience: None,
            model: ModelConfig::with_state_dim(8),
            ..Default::default()
        },
        val_fraction: 0.125,
        level: 0.95,
        output: None,
        save_models: false,
        trajectory_records: Vec::new(),
    }
}

#[test]
fn every_record_is_tested_once_per_repetition() {
    let folds = cv_5x2_folds(37, 3).unwrap();
    assert_eq!(folds.len(), 10);
    let mut tested = [0; 37];
    for pair in folds.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert_eq!(a.0, b.1);
        assert_eq!(a.1, b.0);
        let train: BTreeSet<_> = a.0.iter().collect();
        assert!(a.1.iter().all(|i| !train.contains(i)));
        for &i in a.1.iter().chain(&b.1) {
            tested[i] += 1;
        }
    }
    assert!(tested.iter().all(|&c| c == 5));
    assert_eq!(cv_5x2_folds(37, 3).unwrap(), folds);
    assert_ne!(cv_5x2_folds(37, 4).unwrap(), folds);
    assert!(cv_5x2_folds(3, 0).is_err());
}

#[test]
fn cv_passes_each_fold_to_the_classifier() {
    let data = table(60, 1);
    let scores = cv_5x2(&data, 2, |train, test, _| {
        assert_eq!(train.len() + test.len(), 60);
        let mut p = PredictionSet::new(test.targets.clone(), 0.5);
        for r in &test.records {
            let labels: Vec<bool> = test.targets.iter().map(|t| r.labels[t] == 1).collect();
            let probs = labels.iter().map(|&l| if l { 0.9 } else { 0.1 }).collect();
            p.push(r.id.clone(), probs, labels);
        }
        Ok(p)
    })
    .unwrap();
    assert_eq!(scores.overall, vec![1.0; 10]);
    assert_eq!(scores.target_scores(1).len(), 10);
}

#[test]
fn logistic_regression_separates_separable_data() {
    let data = table(400, 8);
    // Relabel d0 by the sign of c0, keeping a margin around the boundary.
    let mut records = Vec::new();
    for r in &data.records {
        if let Some(a) = r.answers.iter().find(|a| a.feature_id == "c0") {
            let mut r = r.clone();
            let x: f64 = a.value.to_string().parse().unwrap();
            if x.abs() < 0.25 {
                continue;
            }
            r.labels.insert("d0".into(), (x > 0.0) as u8);
            records.push(r);
        }
    }
    let data = DatasetTable::new(data.schema.clone(), data.targets.clone(), records, "separable").unwrap();
    let half = data.len() / 2;
    let train = data.subset(&(0..half).collect::<Vec<_>>(), "train");
    let test = data.subset(&(half..data.len()).collect::<Vec<_>>(), "test");
    let preds = baseline_logreg(&train, &test, Imputation::MeanMode, &BaselineConfig::default(), 0).unwrap();
    let f1 = preds.macro_f1("d0").unwrap();
    assert!(f1 > 0.97, "{f1} on {} records", test.len());
}

#[test]
fn single_class_targets_get_a_constant_classifier() {
    let data = table(120, 2);
    let records = data
        .records
        .iter()
        .cloned()
        .map(|mut r| {
            r.labels.insert("d1".into(), 0);
            r
        })
        .collect();
    let data = DatasetTable::new(data.schema.clone(), data.targets.clone(), records, "constant").unwrap();
    let train = data.subset(&(0..80).collect::<Vec<_>>(), "train");
    let test = data.subset(&(80..120).collect::<Vec<_>>(), "test");
    let config = BaselineConfig {
        epochs: 3,
        ..Default::default()
    };
    for preds in [
        baseline_logreg(&train, &test, Imputation::MeanMode, &config, 1).unwrap(),
        baseline_mlp(&train, &test, Imputation::MeanMode, &config, 1).unwrap(),
    ] {
        let d1 = preds.targets.iter().position(|t| t == "d1").unwrap();
        assert!(preds.probabilities.iter().all(|p| p[d1] < 1e-3));
        assert_eq!(preds.macro_f1("d1").unwrap(), 1.0);
    }
}

#[test]
fn static_view_only_keeps_shared_features() {
    let data = table(300, 4);
    let split = simulate_iio_split(&data, 0.6, SplitSizes::default_for(300), 9).unwrap();
    assert_eq!(split.deleted_features.len(), 4);
    let view = static_view(&split);
    assert_eq!(view.len(), split.test.len());
    for r in &view.records {
        assert!(r.feature_ids().all(|f| !split.deleted_features.iter().any(|d| d == f)));
    }
}

#[test]
fn iio_table_has_a_row_per_cell_and_round_trips() {
    let config = quick_experiment(vec![0, 1], vec![0.6, 1.0]);
    let data = config.dataset.load().unwrap();
    let results = run_iio_on(&data, &config).unwrap();
    assert_eq!(results.rows.len(), 2 * Scenario::ALL.len());
    for row in &results.rows {
        assert_eq!(row.scores.len(), 2);
        assert!(row.scores.iter().all(Option::is_some), "{:?}", row.failures);
        let (lo, hi, mean) = (row.ci_lo.unwrap(), row.ci_hi.unwrap(), row.mean.unwrap());
        assert!(lo <= mean && mean <= hi);
    }
    assert_eq!(run_iio_on(&data, &config).unwrap(), results);

    let csv = results.to_csv().unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(ResultsTable::from_csv(&csv).unwrap(), results);
    assert_eq!(ResultsTable::from_json(&results.to_json().unwrap()).unwrap(), results);

    let dir = tempfile::tempdir().unwrap();
    for name in ["r.csv", "r.json"] {
        let path = dir.path().join(name);
        let format = ExportFormat::from_path(&path).unwrap();
        results.export(&path, format).unwrap();
        assert_eq!(ResultsTable::import(&path, format).unwrap(), results);
    }
}

#[test]
fn failed_cells_are_recorded_without_aborting() {
    let mut config = quick_experiment(vec![3], vec![0.8]);
    config.sizes = Some(SplitSizes {
        source: 400,
        target: 100,
        test: 100,
    });
    let dir = tempfile::tempdir().unwrap();
    config.output = Some(dir.path().to_path_buf());
    let data = config.dataset.load().unwrap();
    let results = run_iio_on(&data, &config).unwrap();
    for row in &results.rows {
        assert!(row.failed());
        assert_eq!(row.mean, None);
        assert_eq!(row.failures.len(), 1);
    }
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(ResultsTable::from_csv(&csv).unwrap(), results);
}

#[test]
fn invalid_experiments_are_rejected_up_front() {
    let data = table(300, 0);
    let mut config = quick_experiment(vec![], vec![0.8]);
    assert!(run_iio_on(&data, &config).is_err());
    config.seeds = vec![0];
    config.overlaps = vec![0.0];
    assert!(run_iio_on(&data, &config).is_err());
    config.overlaps = vec![0.5];
    config.scenarios = vec![Scenario::Local, Scenario::Local];
    assert!(run_iio_on(&data, &config).is_err());
}

//! Mean/mode imputation into fixed-width vectors, for the monolithic
//! baselines only. The modular network never goes through this path;
//! [`imputed_cell_count`] lets tests verify that.

use std::sync::atomic::{AtomicU64, Ordering};

use super::dataset::{encode_answer, DatasetTable, NormStats};
use super::schema::{FeatureKind, FeatureSchema};
use crate::data::ConsultationRecord;
use crate::error::{Error, Result};

static IMPUTED_CELLS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of cells filled in by any [`Imputer`].
pub fn imputed_cell_count() -> u64 {
    IMPUTED_CELLS.load(Ordering::SeqCst)
}

/// Fills missing answers with the training mean (continuous) or mode
/// (binary, categorical), then encodes every feature.
#[derive(Clone, Debug)]
pub struct Imputer {
    schema: Vec<FeatureSchema>,
    stats: NormStats,
    fill: Vec<Vec<f64>>,
    width: usize,
}

impl Imputer {
    pub fn fit(train: &DatasetTable) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("imputer needs training records".into()));
        }
        let stats = train.normalization_stats();
        let mut fill = Vec::with_capacity(train.schema.len());
        for f in &train.schema {
            let encoded: Vec<Vec<f64>> = train
                .records
                .iter()
                .flat_map(|r| r.answers.iter())
                .filter(|a| a.feature_id == f.id)
                .map(|a| encode_answer(f, &a.value, stats.get(&f.id)))
                .collect::<Result<_>>()?;
            let value = match &f.kind {
                // z-scored, so the training mean is 0
                FeatureKind::Continuous => vec![0.0],
                FeatureKind::Binary => {
                    let ones = encoded.iter().filter(|e| e[0] == 1.0).count();
                    vec![f64::from(u8::from(ones * 2 > encoded.len()))]
                }
                FeatureKind::Categorical { levels } => {
                    let mut counts = vec![0usize; levels.len()];
                    for e in &encoded {
                        if let Some(l) = e.iter().position(|&v| v == 1.0) {
                            counts[l] += 1;
                        }
                    }
                    // First level wins ties.
                    let mode = counts
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    (0..levels.len()).map(|l| f64::from(u8::from(l == mode))).collect()
                }
            };
            fill.push(value);
        }
        let width = train.schema.iter().map(FeatureSchema::encoded_width).sum();
        Ok(Imputer {
            schema: train.schema.clone(),
            stats,
            fill,
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn transform(&self, record: &ConsultationRecord) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.width);
        for (f, fill) in self.schema.iter().zip(&self.fill) {
            match record.answers.iter().find(|a| a.feature_id == f.id) {
                Some(a) => out.extend(encode_answer(f, &a.value, self.stats.get(&f.id))?),
                None => {
                    IMPUTED_CELLS.fetch_add(1, Ordering::SeqCst);
                    out.extend_from_slice(fill);
                }
            }
        }
        Ok(out)
    }

    pub fn transform_all(&self, table: &DatasetTable) -> Result<Vec<Vec<f64>>> {
        table.records.iter().map(|r| self.transform(r)).collect()
    }
}

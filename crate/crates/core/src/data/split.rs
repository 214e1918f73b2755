use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetTable;
use crate::error::{Error, Result};

/// Record counts for the source, target, and test partitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub source: usize,
    pub target: usize,
    pub test: usize,
}

impl SplitSizes {
    /// 20% test, the rest split 4:1 between source and target.
    pub fn default_for(n_records: usize) -> Self {
        let test = n_records / 5;
        let rest = n_records - test;
        let source = rest * 4 / 5;
        SplitSizes {
            source,
            target: rest - source,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.source + self.target + self.test
    }
}

/// Two imperfectly interoperable datasets plus a fully featured test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IioSplit {
    /// Dataset A: the larger source, with `deleted_features` removed.
    pub source: DatasetTable,
    /// Dataset B: the smaller target, with every feature.
    pub target: DatasetTable,
    pub test: DatasetTable,
    pub overlap: f64,
    pub deleted_features: Vec<String>,
}

impl IioSplit {
    pub fn shared_features(&self) -> Vec<String> {
        self.source.feature_ids()
    }
}

/// Number of features removed from A for a given overlap. The count is
/// rounded up so the realised overlap never exceeds the requested one.
pub fn deleted_count(n_features: usize, overlap: f64) -> usize {
    let raw = (1.0 - overlap) * n_features as f64;
    // (1 - 0.6) * 10 is 4.000000000000001 in binary floating point.
    let snapped = (raw * 1e9).round() / 1e9;
    (snapped.ceil() as usize).min(n_features)
}

/// Partitions `full` into disjoint source/target/test sets by a seeded
/// shuffle and deletes a seeded draw of features from the source.
pub fn simulate_iio_split(
    full: &DatasetTable,
    overlap: f64,
    sizes: SplitSizes,
    seed: u64,
) -> Result<IioSplit> {
    if !(overlap > 0.0 && overlap <= 1.0) {
        return Err(Error::Config(format!(
            "overlap must lie in (0, 1], got {overlap}"
        )));
    }
    if sizes.total() > full.len() {
        return Err(Error::Config(format!(
            "split needs {} records, dataset has {}",
            sizes.total(),
            full.len()
        )));
    }
    let n_delete = deleted_count(full.schema.len(), overlap);
    if n_delete == full.schema.len() {
        return Err(Error::Config(format!(
            "overlap {overlap} leaves the source without features"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.shuffle(&mut rng);
    let (a, rest) = order.split_at(sizes.source);
    let (b, rest) = rest.split_at(sizes.target);
    let test = &rest[..sizes.test];

    let mut feature_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let ids = full.feature_ids();
    let mut deleted: Vec<String> = ids
        .choose_multiple(&mut feature_rng, n_delete)
        .cloned()
        .collect();
    // Keep schema order for readability.
    deleted.sort_by_key(|d| ids.iter().position(|i| i == d));

    let source = full
        .subset(a, format!("source A of {}", full.provenance))
        .without_features(&deleted);
    Ok(IioSplit {
        source,
        target: full.subset(b, format!("target B of {}", full.provenance)),
        test: full.subset(test, format!("test of {}", full.provenance)),
        overlap,
        deleted_features: deleted,
    })
}

/// Seeded split of `0..n` into `(kept, held_out)` index lists, with
/// `fraction` of the indices held out (at least one index is always kept).
pub fn holdout(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_out = ((n as f64) * fraction).round() as usize;
    let n_out = n_out.min(n.saturating_sub(1));
    let (out, keep) = order.split_at(n_out);
    (keep.to_vec(), out.to_vec())
}

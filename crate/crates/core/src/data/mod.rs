//! Feature schemas, dataset ingestion, answer encoding, synthetic data, and
//! imperfect-interoperability splits.

mod dataset;
mod impute;
mod schema;
mod split;
mod synthetic;

pub use dataset::{
    encode_answer, load_dataset, read_dataset, write_dataset, Answer, ConsultationRecord,
    DatasetTable, FeatureStats, NormStats,
};
pub use impute::{imputed_cell_count, Imputer};
pub use schema::{
    feature_index, FeatureDescriptor, FeatureKind, FeatureSchema, RawValue, SchemaDescriptor,
};
pub use split::{deleted_count, holdout, simulate_iio_split, IioSplit, SplitSizes};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with_rule, GenerativeRule, LabelRule, SyntheticSpec,
};

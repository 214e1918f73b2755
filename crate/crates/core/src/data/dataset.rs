use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{feature_index, parse_flag, validate_schema, FeatureSchema, RawValue, SchemaDescriptor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub feature_id: String,
    pub value: RawValue,
    /// Simultaneity group, copied from the schema.
    pub group: u32,
}

/// One consultation: the answers actually collected, in the order they
/// were asked, plus the diagnoses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsultationRecord {
    pub id: String,
    pub answers: Vec<Answer>,
    pub labels: BTreeMap<String, u8>,
}

impl ConsultationRecord {
    pub fn new(id: impl Into<String>) -> Self {
        ConsultationRecord {
            id: id.into(),
            answers: Vec::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn answer(mut self, feature_id: &str, value: impl Into<RawValue>, group: u32) -> Self {
        self.answers.push(Answer {
            feature_id: feature_id.to_string(),
            value: value.into(),
            group,
        });
        self
    }

    pub fn label(mut self, target: &str, positive: bool) -> Self {
        self.labels.insert(target.to_string(), u8::from(positive));
        self
    }

    pub fn has_feature(&self, feature_id: &str) -> bool {
        self.answers.iter().any(|a| a.feature_id == feature_id)
    }

    pub fn feature_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.answers.iter().map(|a| a.feature_id.as_str())
    }

    /// Copy of this record with only the answers whose feature passes `keep`.
    pub fn filter_features(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        ConsultationRecord {
            id: self.id.clone(),
            answers: self
                .answers
                .iter()
                .filter(|a| keep(&a.feature_id))
                .cloned()
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Mean and standard deviation of a continuous feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

pub type NormStats = BTreeMap<String, FeatureStats>;

/// Encodes one answer into the vector an encoder consumes: z-score for
/// continuous values, 0/1 for binary, one-hot for categorical.
///
/// Continuous features without stats are passed through unscaled. A zero
/// standard deviation encodes every value as 0.
pub fn encode_answer(
    schema: &FeatureSchema,
    value: &RawValue,
    stats: Option<&FeatureStats>,
) -> Result<Vec<f64>> {
    use super::schema::FeatureKind;
    let canonical = schema.canonicalize(value)?;
    Ok(match (&schema.kind, canonical) {
        (FeatureKind::Continuous, RawValue::Number(x)) => match stats {
            Some(s) if s.std > 0.0 => vec![(x - s.mean) / s.std],
            Some(_) => {
                log::warn!("feature `{}` is constant in training data; encoding as 0", schema.id);
                vec![0.0]
            }
            None => vec![x],
        },
        (FeatureKind::Binary, RawValue::Bool(b)) => vec![f64::from(u8::from(b))],
        (FeatureKind::Categorical { levels }, RawValue::Text(t)) => {
            levels.iter().map(|l| f64::from(u8::from(*l == t))).collect()
        }
        _ => unreachable!("canonicalize returns the kind's canonical variant"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable {
    pub schema: Vec<FeatureSchema>,
    pub targets: Vec<String>,
    pub records: Vec<ConsultationRecord>,
    pub provenance: String,
}

impl DatasetTable {
    pub fn new(
        schema: Vec<FeatureSchema>,
        targets: Vec<String>,
        records: Vec<ConsultationRecord>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let table = DatasetTable {
            schema,
            targets,
            records,
            provenance: provenance.into(),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature(&self, id: &str) -> Option<&FeatureSchema> {
        self.schema.iter().find(|f| f.id == id)
    }

    pub fn feature_ids(&self) -> Vec<String> {
        self.schema.iter().map(|f| f.id.clone()).collect()
    }

    /// Checks every record against the schema and target list.
    pub fn validate(&self) -> Result<()> {
        validate_schema(&self.schema, &self.targets)?;
        let index = feature_index(&self.schema);
        let targets: BTreeSet<&str> = self.targets.iter().map(String::as_str).collect();
        for r in &self.records {
            let mut seen = BTreeSet::new();
            for a in &r.answers {
                let f = index.get(a.feature_id.as_str()).ok_or_else(|| {
                    Error::Schema(format!(
                        "record `{}` answers unknown feature `{}`",
                        r.id, a.feature_id
                    ))
                })?;
                if !seen.insert(a.feature_id.as_str()) {
                    return Err(Error::Schema(format!(
                        "record `{}` answers `{}` twice",
                        r.id, a.feature_id
                    )));
                }
                f.canonicalize(&a.value)?;
            }
            for (t, &y) in &r.labels {
                if !targets.contains(t.as_str()) {
                    return Err(Error::Schema(format!(
                        "record `{}` labels unknown target `{t}`",
                        r.id
                    )));
                }
                if y > 1 {
                    return Err(Error::Schema(format!(
                        "record `{}` has non-binary label {y} for `{t}`",
                        r.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn answer_count(&self) -> usize {
        self.records.iter().map(|r| r.answers.len()).sum()
    }

    /// New table over the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Self {
        DatasetTable {
            schema: self.schema.clone(),
            targets: self.targets.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: provenance.into(),
        }
    }

    /// Drops the listed features from the schema and from every record.
    pub fn without_features(&self, removed: &[String]) -> Self {
        let removed: BTreeSet<&str> = removed.iter().map(String::as_str).collect();
        DatasetTable {
            schema: self
                .schema
                .iter()
                .filter(|f| !removed.contains(f.id.as_str()))
                .cloned()
                .collect(),
            targets: self.targets.clone(),
            records: self
                .records
                .iter()
                .map(|r| r.filter_features(|id| !removed.contains(id)))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Mean and population standard deviation of every continuous feature,
    /// over the answers present in this table.
    pub fn normalization_stats(&self) -> NormStats {
        use super::schema::FeatureKind;
        let mut out = NormStats::new();
        for f in self.schema.iter().filter(|f| f.kind == FeatureKind::Continuous) {
            let xs: Vec<f64> = self
                .records
                .iter()
                .flat_map(|r| r.answers.iter())
                .filter(|a| a.feature_id == f.id)
                .filter_map(|a| match f.canonicalize(&a.value) {
                    Ok(RawValue::Number(x)) => Some(x),
                    _ => None,
                })
                .collect();
            let stats = if xs.is_empty() {
                FeatureStats { mean: 0.0, std: 1.0 }
            } else {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                FeatureStats {
                    mean,
                    std: var.sqrt(),
                }
            };
            out.insert(f.id.clone(), stats);
        }
        out
    }

    /// Rate of positive labels per target.
    pub fn label_rates(&self) -> Vec<f64> {
        self.targets
            .iter()
            .map(|t| {
                let pos = self
                    .records
                    .iter()
                    .filter(|r| r.labels.get(t) == Some(&1))
                    .count();
                pos as f64 / self.records.len().max(1) as f64
            })
            .collect()
    }
}

/// Reads a consultation CSV plus its JSON schema descriptor.
///
/// Empty cells and cells equal to the descriptor's sentinel become absent
/// answers. Nothing is imputed: the number of answers equals the number of
/// non-missing feature cells.
pub fn load_dataset(data_path: &Path, schema_path: &Path) -> Result<DatasetTable> {
    let schema_text =
        std::fs::read_to_string(schema_path).map_err(|e| Error::io(schema_path, e))?;
    let descriptor: SchemaDescriptor = serde_json::from_str(&schema_text)?;
    descriptor.validate()?;
    let file = std::fs::File::open(data_path).map_err(|e| Error::io(data_path, e))?;
    read_dataset(file, &descriptor, &data_path.display().to_string())
}

enum Column {
    Id,
    Feature(usize),
    Target(usize),
}

pub fn read_dataset(
    reader: impl std::io::Read,
    descriptor: &SchemaDescriptor,
    provenance: &str,
) -> Result<DatasetTable> {
    descriptor.validate()?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv.headers()?.clone();

    let mut columns = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let h = h.trim();
        let col = if descriptor.id_column.as_deref() == Some(h) {
            Column::Id
        } else if let Some(i) = descriptor.features.iter().position(|f| f.id == h) {
            Column::Feature(i)
        } else if let Some(i) = descriptor.targets.iter().position(|t| t == h) {
            Column::Target(i)
        } else {
            return Err(Error::Cell {
                row: 0,
                column: h.to_string(),
                message: "column is not declared in the schema".into(),
            });
        };
        columns.push(col);
    }
    for t in &descriptor.targets {
        if !headers.iter().any(|h| h.trim() == t) {
            return Err(Error::Schema(format!("target column `{t}` missing from CSV")));
        }
    }
    if let Some(id) = &descriptor.id_column {
        if !headers.iter().any(|h| h.trim() == id) {
            return Err(Error::Schema(format!("id column `{id}` missing from CSV")));
        }
    }

    let sentinel = descriptor.missing_sentinel.trim();
    let is_missing = |cell: &str| {
        let c = cell.trim();
        c.is_empty() || (!sentinel.is_empty() && c == sentinel)
    };

    let mut records = Vec::new();
    for (row_idx, row) in csv.records().enumerate() {
        let row = row?;
        let row_no = row_idx + 1;
        let mut record = ConsultationRecord::new(row_no.to_string());
        for (cell, (col, header)) in row.iter().zip(columns.iter().zip(headers.iter())) {
            let cell_err = |message: String| Error::Cell {
                row: row_no,
                column: header.trim().to_string(),
                message,
            };
            match col {
                Column::Id => record.id = cell.trim().to_string(),
                Column::Feature(i) => {
                    if is_missing(cell) {
                        continue;
                    }
                    let f = &descriptor.features[*i];
                    let value = f
                        .canonicalize(&RawValue::Text(cell.trim().to_string()))
                        .map_err(|e| match e {
                            Error::InvalidValue { message, .. } => cell_err(message),
                            other => other,
                        })?;
                    record.answers.push(Answer {
                        feature_id: f.id.clone(),
                        value,
                        group: f.group,
                    });
                }
                Column::Target(i) => {
                    let y = parse_flag(cell)
                        .ok_or_else(|| cell_err(format!("label `{}` is not 0/1", cell.trim())))?;
                    record
                        .labels
                        .insert(descriptor.targets[*i].clone(), u8::from(y));
                }
            }
        }
        records.push(record);
    }

    DatasetTable::new(
        descriptor.features.clone(),
        descriptor.targets.clone(),
        records,
        provenance,
    )
}

/// Writes a table as CSV (one column per feature, then per target) together
/// with a matching schema descriptor. Missing answers become empty cells.
pub fn write_dataset(table: &DatasetTable, data_path: &Path, schema_path: &Path) -> Result<()> {
    let descriptor = SchemaDescriptor {
        features: table.schema.clone(),
        targets: table.targets.clone(),
        missing_sentinel: String::new(),
        id_column: Some("record_id".into()),
    };
    let json = serde_json::to_string_pretty(&descriptor)?;
    std::fs::write(schema_path, json).map_err(|e| Error::io(schema_path, e))?;

    let mut w = csv::Writer::from_path(data_path)?;
    let mut header = vec!["record_id".to_string()];
    header.extend(table.schema.iter().map(|f| f.id.clone()));
    header.extend(table.targets.iter().cloned());
    w.write_record(&header)?;
    for r in &table.records {
        let mut row = vec![r.id.clone()];
        for f in &table.schema {
            let cell = r
                .answers
                .iter()
                .find(|a| a.feature_id == f.id)
                .map(|a| match &a.value {
                    RawValue::Bool(b) => u8::from(*b).to_string(),
                    other => other.to_string(),
                })
                .unwrap_or_default();
            row.push(cell);
        }
        for t in &table.targets {
            row.push(r.labels.get(t).copied().unwrap_or(0).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(data_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor() -> SchemaDescriptor {
        serde_json::from_str(
            r#"{"features":[
                {"id":"temp","kind":"continuous","group":1},
                {"id":"cough","kind":"binary","group":1},
                {"id":"pallor","kind":"categorical","levels":["yes","no"],"group":2}
            ],"targets":["pneumonia"],"missing_sentinel":"NA"}"#,
        )
        .unwrap()
    }

    #[test]
    fn blank_cell_becomes_absent_answer() {
        let csv = "temp,cough,pallor,pneumonia\n38.1,1,yes,1\n37.0,,no,0\nNA,0,yes,0\n";
        let t = read_dataset(csv.as_bytes(), &descriptor(), "fixture").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.records[0].answers.len(), 3);
        assert_eq!(t.records[1].answers.len(), 2);
        assert!(!t.records[1].has_feature("cough"));
        assert_eq!(t.records[2].answers.len(), 2);
        assert_eq!(t.answer_count(), 7);
    }

    #[test]
    fn level_outside_declared_set_reports_coordinates() {
        let csv = "temp,cough,pallor,pneumonia\n38.1,1,yes,1\n37.0,0,maybe,0\n";
        match read_dataset(csv.as_bytes(), &descriptor(), "fixture") {
            Err(Error::Cell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "pallor");
            }
            other => panic!("expected cell error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_column_and_bad_number() {
        let csv = "temp,cough,pallor,pneumonia,extra\n38.1,1,yes,1,3\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &descriptor(), "f"),
            Err(Error::Cell { row: 0, .. })
        ));
        let csv = "temp,cough,pallor,pneumonia\nhot,1,yes,1\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &descriptor(), "f"),
            Err(Error::Cell { row: 1, .. })
        ));
    }

    #[test]
    fn encodings() {
        let x = FeatureSchema::continuous("temp", 0);
        let stats = FeatureStats {
            mean: 37.2,
            std: 1.5,
        };
        assert_eq!(encode_answer(&x, &37.2.into(), Some(&stats)).unwrap(), vec![0.0]);
        let z = encode_answer(&x, &38.7.into(), Some(&stats)).unwrap()[0];
        assert!((z - 1.0).abs() < 1e-12, "{z}");
        let constant = FeatureStats { mean: 1.0, std: 0.0 };
        assert_eq!(encode_answer(&x, &5.0.into(), Some(&constant)).unwrap(), vec![0.0]);

        let c = FeatureSchema::categorical("c", &["a", "b", "c", "d"], 0);
        assert_eq!(
            encode_answer(&c, &"b".into(), None).unwrap(),
            vec![0.0, 1.0, 0.0, 0.0]
        );
        let b = FeatureSchema::binary("b", 0);
        assert_eq!(encode_answer(&b, &true.into(), None).unwrap(), vec![1.0]);
    }

    #[test]
    fn write_then_read() {
        let csv = "temp,cough,pallor,pneumonia\n38.1,1,yes,1\n37.0,,no,0\n";
        let t = read_dataset(csv.as_bytes(), &descriptor(), "fixture").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (d, s) = (dir.path().join("d.csv"), dir.path().join("s.json"));
        write_dataset(&t, &d, &s).unwrap();
        let back = load_dataset(&d, &s).unwrap();
        assert_eq!(back.records, t.records);
    }
}

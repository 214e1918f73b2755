use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Continuous,
    Binary,
    Categorical { levels: Vec<String> },
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Binary => "binary",
            FeatureKind::Categorical { .. } => "categorical",
        }
    }
}

/// One question of the questionnaire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FeatureDescriptor", into = "FeatureDescriptor")]
pub struct FeatureSchema {
    pub id: String,
    pub question: String,
    pub kind: FeatureKind,
    /// Questions sharing a group are asked at the same moment.
    pub group: u32,
}

impl FeatureSchema {
    pub fn continuous(id: impl Into<String>, group: u32) -> Self {
        let id = id.into();
        FeatureSchema {
            question: id.clone(),
            id,
            kind: FeatureKind::Continuous,
            group,
        }
    }

    pub fn binary(id: impl Into<String>, group: u32) -> Self {
        let id = id.into();
        FeatureSchema {
            question: id.clone(),
            id,
            kind: FeatureKind::Binary,
            group,
        }
    }

    pub fn categorical(id: impl Into<String>, levels: &[&str], group: u32) -> Self {
        let id = id.into();
        FeatureSchema {
            question: id.clone(),
            id,
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            group,
        }
    }

    pub fn with_question(mut self, question: impl Into<String>) -> Self {
        self.question = question.into();
        self
    }

    /// Width of the encoded answer vector.
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            FeatureKind::Continuous | FeatureKind::Binary => 1,
            FeatureKind::Categorical { levels } => levels.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Schema("feature with empty id".into()));
        }
        if let FeatureKind::Categorical { levels } = &self.kind {
            if levels.is_empty() {
                return Err(Error::Schema(format!(
                    "categorical feature `{}` declares no levels",
                    self.id
                )));
            }
            let unique: BTreeSet<_> = levels.iter().collect();
            if unique.len() != levels.len() {
                return Err(Error::Schema(format!(
                    "categorical feature `{}` repeats a level",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Wire form of a feature inside the schema descriptor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    #[serde(default)]
    pub group: u32,
    #[serde(default)]
    pub question: Option<String>,
}

impl TryFrom<FeatureDescriptor> for FeatureSchema {
    type Error = Error;

    fn try_from(d: FeatureDescriptor) -> Result<Self> {
        let kind = match d.kind.as_str() {
            "continuous" => FeatureKind::Continuous,
            "binary" => FeatureKind::Binary,
            "categorical" => FeatureKind::Categorical {
                levels: d.levels.clone().ok_or_else(|| {
                    Error::Schema(format!("categorical feature `{}` needs `levels`", d.id))
                })?,
            },
            other => {
                return Err(Error::Schema(format!(
                    "feature `{}` has unknown kind `{other}`",
                    d.id
                )))
            }
        };
        if d.levels.is_some() && !matches!(kind, FeatureKind::Categorical { .. }) {
            return Err(Error::Schema(format!(
                "feature `{}` declares levels but is {}",
                d.id, d.kind
            )));
        }
        let schema = FeatureSchema {
            question: d.question.unwrap_or_else(|| d.id.clone()),
            id: d.id,
            kind,
            group: d.group,
        };
        schema.validate()?;
        Ok(schema)
    }
}

impl From<FeatureSchema> for FeatureDescriptor {
    fn from(f: FeatureSchema) -> Self {
        let levels = match &f.kind {
            FeatureKind::Categorical { levels } => Some(levels.clone()),
            _ => None,
        };
        FeatureDescriptor {
            kind: f.kind.name().to_string(),
            id: f.id,
            levels,
            group: f.group,
            question: Some(f.question),
        }
    }
}

/// The JSON file that accompanies a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub features: Vec<FeatureSchema>,
    pub targets: Vec<String>,
    /// Cell content meaning "not asked". Empty cells are always missing.
    #[serde(default)]
    pub missing_sentinel: String,
    /// Optional column holding record ids; row numbers are used otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
}

impl SchemaDescriptor {
    pub fn validate(&self) -> Result<()> {
        validate_schema(&self.features, &self.targets)
    }
}

pub(crate) fn validate_schema(features: &[FeatureSchema], targets: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for f in features {
        f.validate()?;
        if !seen.insert(f.id.as_str()) {
            return Err(Error::Schema(format!("duplicate feature id `{}`", f.id)));
        }
    }
    let mut seen_t = BTreeSet::new();
    for t in targets {
        if t.is_empty() {
            return Err(Error::Schema("target with empty id".into()));
        }
        if !seen_t.insert(t.as_str()) {
            return Err(Error::Schema(format!("duplicate target id `{t}`")));
        }
        if seen.contains(t.as_str()) {
            return Err(Error::Schema(format!(
                "`{t}` is declared both as a feature and a target"
            )));
        }
    }
    Ok(())
}

/// A raw answer value as it appears in files and API payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Bool(b) => write!(f, "{b}"),
            RawValue::Number(x) => write!(f, "{x}"),
            RawValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for RawValue {
    fn from(x: f64) -> Self {
        RawValue::Number(x)
    }
}

impl From<bool> for RawValue {
    fn from(b: bool) -> Self {
        RawValue::Bool(b)
    }
}

impl From<&str> for RawValue {
    fn from(s: &str) -> Self {
        RawValue::Text(s.to_string())
    }
}

impl FeatureSchema {
    /// Checks `value` against this feature's kind and returns its canonical
    /// form: `Number` for continuous, `Bool` for binary, the exact level
    /// text for categorical.
    pub fn canonicalize(&self, value: &RawValue) -> Result<RawValue> {
        let invalid = |message: String| Error::InvalidValue {
            feature: self.id.clone(),
            message,
        };
        match (&self.kind, value) {
            (FeatureKind::Continuous, RawValue::Number(x)) if x.is_finite() => {
                Ok(RawValue::Number(*x))
            }
            (FeatureKind::Continuous, RawValue::Text(s)) => match s.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(RawValue::Number(x)),
                _ => Err(invalid(format!("`{s}` is not a finite number"))),
            },
            (FeatureKind::Continuous, other) => {
                Err(invalid(format!("`{other}` is not a finite number")))
            }
            (FeatureKind::Binary, RawValue::Bool(b)) => Ok(RawValue::Bool(*b)),
            (FeatureKind::Binary, RawValue::Number(x)) if *x == 0.0 || *x == 1.0 => {
                Ok(RawValue::Bool(*x == 1.0))
            }
            (FeatureKind::Binary, RawValue::Text(s)) => parse_flag(s)
                .map(RawValue::Bool)
                .ok_or_else(|| invalid(format!("`{s}` is not one of 0/1, true/false, yes/no"))),
            (FeatureKind::Binary, other) => Err(invalid(format!(
                "`{other}` is not one of 0/1, true/false, yes/no"
            ))),
            (FeatureKind::Categorical { levels }, value) => {
                let text = match value {
                    RawValue::Text(s) => s.clone(),
                    other => other.to_string(),
                };
                if levels.contains(&text) {
                    Ok(RawValue::Text(text))
                } else {
                    Err(invalid(format!(
                        "`{text}` is not a declared level (expected one of: {})",
                        levels.join(", ")
                    )))
                }
            }
        }
    }
}

pub(crate) fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" | "y" => Some(true),
        "0" | "0.0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Looks features up by id.
pub fn feature_index(features: &[FeatureSchema]) -> BTreeMap<&str, &FeatureSchema> {
    features.iter().map(|f| (f.id.as_str(), f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"features":[
            {"id":"temp","kind":"continuous","group":1,"question":"Temperature?"},
            {"id":"cough","kind":"binary","group":1},
            {"id":"dur","kind":"categorical","levels":["<1d","1-3d",">3d"],"group":2}
        ],"targets":["pneumonia"],"missing_sentinel":"NA"}"#;
        let d: SchemaDescriptor = serde_json::from_str(json).unwrap();
        d.validate().unwrap();
        assert_eq!(d.features[1].question, "cough");
        assert_eq!(d.features[2].encoded_width(), 3);
        let again: SchemaDescriptor =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn categorical_needs_unique_levels() {
        let bad = r#"{"id":"x","kind":"categorical","levels":["a","a"]}"#;
        assert!(serde_json::from_str::<FeatureSchema>(bad).is_err());
        let empty = r#"{"id":"x","kind":"categorical","levels":[]}"#;
        assert!(serde_json::from_str::<FeatureSchema>(empty).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = vec![FeatureSchema::binary("a", 0), FeatureSchema::binary("a", 1)];
        assert!(matches!(validate_schema(&f, &[]), Err(Error::Schema(_))));
        let g = vec![FeatureSchema::binary("a", 0)];
        let t = vec!["d".to_string(), "d".to_string()];
        assert!(validate_schema(&g, &t).is_err());
    }

    #[test]
    fn canonical_values() {
        let b = FeatureSchema::binary("b", 0);
        assert_eq!(b.canonicalize(&"yes".into()).unwrap(), RawValue::Bool(true));
        assert_eq!(b.canonicalize(&0.0.into()).unwrap(), RawValue::Bool(false));
        assert!(b.canonicalize(&"maybe".into()).is_err());
        let c = FeatureSchema::categorical("c", &["yes", "no"], 0);
        let err = c.canonicalize(&"maybe".into()).unwrap_err();
        assert!(err.to_string().contains("yes, no"), "{err}");
        let x = FeatureSchema::continuous("x", 0);
        assert_eq!(x.canonicalize(&" 38.5 ".into()).unwrap(), RawValue::Number(38.5));
        assert!(x.canonicalize(&"hot".into()).is_err());
    }
}

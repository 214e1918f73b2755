//! Single-file model format.
//!
//! ```text
//! offset  size         field
//! 0       8            magic  b"MODNNET\0"
//! 8       4            format version, u32 LE
//! 12      8            header length H, u64 LE
//! 20      H            header, UTF-8 JSON (see `Header`)
//! 20+H    8            parameter count N (scalars), u64 LE
//! 28+H    8N           parameter values, f64 LE, in header order
//! 28+H+8N 32           SHA-256 over every preceding byte
//! ```
//!
//! The header lists each parameter's name and shape in the order its
//! values appear in the blob, along with the feature schema, targets,
//! normalization stats, module sizes, seed, and schema fingerprint.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{decoder_prefix, encoder_prefix, schema_fingerprint, ModelConfig, ModnModel, INITIAL_STATE};
use crate::autodiff::{Mlp, ParamStore, Tensor};
use crate::data::{FeatureSchema, NormStats};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MODNNET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintPolicy {
    #[default]
    Reject,
    /// Log a warning and load anyway.
    Warn,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub expected_fingerprint: Option<String>,
    pub policy: FingerprintPolicy,
}

impl LoadOptions {
    pub fn expecting(fingerprint: impl Into<String>) -> Self {
        LoadOptions {
            expected_fingerprint: Some(fingerprint.into()),
            policy: FingerprintPolicy::Reject,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    seed: u64,
    config: ModelConfig,
    features: Vec<FeatureSchema>,
    targets: Vec<String>,
    normalization: NormStats,
    params: Vec<ParamEntry>,
}

pub(super) fn to_bytes(model: &ModnModel) -> Result<Vec<u8>> {
    let params = &model.params;
    let header = Header {
        fingerprint: model.fingerprint(),
        seed: model.seed,
        config: model.config.clone(),
        features: model.schema.clone(),
        targets: model.targets.clone(),
        normalization: model.normalization.clone(),
        params: params
            .ids()
            .map(|id| ParamEntry {
                name: params.name(id).to_string(),
                shape: params.value(id).shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let n = params.scalar_count();

    let mut out = Vec::with_capacity(20 + header.len() + 8 + 8 * n + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for id in params.ids() {
        for v in params.value(id).data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Corrupt(format!(
                    "truncated while reading {what} at byte {} of {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub(super) fn from_bytes(bytes: &[u8], options: &LoadOptions) -> Result<ModnModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::Corrupt("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = usize::try_from(cur.u64("header length")?)
        .map_err(|_| Error::Corrupt("header length overflows".into()))?;
    let header_bytes = cur.take(header_len, "header")?;
    let n = usize::try_from(cur.u64("parameter count")?)
        .map_err(|_| Error::Corrupt("parameter count overflows".into()))?;
    let blob = cur.take(
        n.checked_mul(8)
            .ok_or_else(|| Error::Corrupt("parameter count overflows".into()))?,
        "parameter values",
    )?;
    let body_end = cur.pos;
    let checksum = cur.take(32, "checksum")?;
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after checksum",
            bytes.len() - cur.pos
        )));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != checksum {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }

    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Corrupt(format!("unreadable header: {e}")))?;
    let fingerprint = schema_fingerprint(&header.features, &header.targets);
    if fingerprint != header.fingerprint {
        return Err(Error::Corrupt(
            "stored fingerprint does not match stored schema".into(),
        ));
    }
    if let Some(expected) = &options.expected_fingerprint {
        if *expected != fingerprint {
            match options.policy {
                FingerprintPolicy::Reject => {
                    return Err(Error::Fingerprint {
                        found: fingerprint,
                        expected: expected.clone(),
                    })
                }
                FingerprintPolicy::Warn => log::warn!(
                    "model schema fingerprint {fingerprint} differs from expected {expected}; loading anyway"
                ),
            }
        }
    }

    let expected_n: usize = header
        .params
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum();
    if expected_n != n {
        return Err(Error::Corrupt(format!(
            "header declares {expected_n} parameter values, blob holds {n}"
        )));
    }

    let mut params = ParamStore::new(header.seed);
    let mut offset = 0;
    for p in &header.params {
        let len: usize = p.shape.iter().product();
        let data = blob[offset * 8..(offset + len) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += len;
        params
            .insert(p.name.clone(), Tensor::new(p.shape.clone(), data)?)
            .map_err(|e| Error::Corrupt(e.to_string()))?;
    }

    let initial_state = params
        .id(INITIAL_STATE)
        .ok_or_else(|| Error::Corrupt("missing initial state".into()))?;
    if params.value(initial_state).shape() != [header.config.state_dim] {
        return Err(Error::Corrupt("initial state has the wrong size".into()));
    }
    let mut encoders = BTreeMap::new();
    for f in &header.features {
        let spec = header.config.encoder_spec(f.encoded_width());
        let mlp = Mlp::bind(spec, &params, &encoder_prefix(&f.id))
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        encoders.insert(f.id.clone(), mlp);
    }
    let mut decoders = BTreeMap::new();
    for t in &header.targets {
        let mlp = Mlp::bind(header.config.decoder_spec(), &params, &decoder_prefix(t))
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        decoders.insert(t.clone(), mlp);
    }

    Ok(ModnModel {
        config: header.config,
        seed: header.seed,
        schema: header.features,
        targets: header.targets,
        normalization: header.normalization,
        params,
        initial_state,
        encoders,
        decoders,
    })
}

pub fn load_model(path: &Path, options: &LoadOptions) -> Result<ModnModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, options)
}

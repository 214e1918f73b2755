//! Append-only session logs: one JSON event per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use modn::data::RawValue;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        model_id: String,
        fingerprint: String,
        at_ms: u64,
    },
    Answered {
        feature_id: String,
        value: RawValue,
        at_ms: u64,
    },
    Retracted {
        feature_id: String,
        at_ms: u64,
    },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn append(path: &Path, event: &Event) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(event)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()
}

pub fn read(path: &Path) -> std::io::Result<Vec<Event>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), i + 1),
            )
        })?;
        events.push(event);
    }
    Ok(events)
}

/// The session header and its surviving answers, in submission order.
#[derive(Clone, Debug, PartialEq)]
pub struct Replayed {
    pub session_id: String,
    pub model_id: String,
    pub fingerprint: String,
    pub answers: Vec<(String, RawValue)>,
}

pub fn replay(events: &[Event]) -> Result<Replayed, String> {
    let mut it = events.iter();
    let mut out = match it.next() {
        Some(Event::Created {
            session_id,
            model_id,
            fingerprint,
            ..
        }) => Replayed {
            session_id: session_id.clone(),
            model_id: model_id.clone(),
            fingerprint: fingerprint.clone(),
            answers: Vec::new(),
        },
        _ => return Err("log does not start with a `created` event".into()),
    };
    for e in it {
        match e {
            Event::Created { .. } => return Err("log holds a second `created` event".into()),
            Event::Answered {
                feature_id, value, ..
            } => {
                if out.answers.iter().any(|(f, _)| f == feature_id) {
                    return Err(format!("feature `{feature_id}` answered twice"));
                }
                out.answers.push((feature_id.clone(), value.clone()));
            }
            Event::Retracted { feature_id, .. } => {
                let before = out.answers.len();
                out.answers.retain(|(f, _)| f != feature_id);
                if out.answers.len() == before {
                    return Err(format!("retraction of unanswered feature `{feature_id}`"));
                }
            }
        }
    }
    Ok(out)
}

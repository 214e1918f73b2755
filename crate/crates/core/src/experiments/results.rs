//! Aggregated experiment results and their CSV/JSON forms.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stats::{mean_ci, paired_t_test, TTest};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Static,
    Local,
    Global,
    FineTune,
    ModularUpdate,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Static,
        Scenario::Local,
        Scenario::Global,
        Scenario::FineTune,
        Scenario::ModularUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::Local => "local",
            Scenario::Global => "global",
            Scenario::FineTune => "fine_tune",
            Scenario::ModularUpdate => "modular_update",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// One (scenario, overlap) cell aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub overlap: f64,
    /// Overall macro F1 per seed, in `ResultsTable::seeds` order; `None`
    /// where that seed's run failed.
    pub scores: Vec<Option<f64>>,
    /// Mean over the seeds that succeeded.
    pub mean: Option<f64>,
    /// Interval bounds, set when at least two seeds succeeded.
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// Error messages of failed seeds.
    pub failures: Vec<String>,
}

impl ResultRow {
    pub fn new(scenario: Scenario, overlap: f64, scores: Vec<Option<f64>>, failures: Vec<String>, level: f64) -> Self {
        let ok: Vec<f64> = scores.iter().flatten().copied().collect();
        let ci = mean_ci(&ok, level).ok();
        let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        ResultRow {
            scenario,
            overlap,
            scores,
            mean: ci.map(|c| c.mean).or(mean),
            ci_lo: ci.map(|c| c.lo),
            ci_hi: ci.map(|c| c.hi),
            failures,
        }
    }

    pub fn failed(&self) -> bool {
        self.scores.iter().any(Option::is_none)
    }
}

/// Paired comparison of two scenarios at one overlap, over the seeds where
/// both succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub overlap: f64,
    pub a: Scenario,
    pub b: Scenario,
    pub test: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub seeds: Vec<u64>,
    pub level: f64,
    pub rows: Vec<ResultRow>,
    pub comparisons: Vec<Comparison>,
}

pub const CSV_HEADER: [&str; 9] = [
    "scenario", "overlap", "level", "mean", "ci_lo", "ci_hi", "seeds", "scores", "failures",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(ExportFormat::Csv),
            Some("json") => Ok(ExportFormat::Json),
            _ => Err(Error::Config(format!(
                "cannot infer results format from `{}` (use .csv or .json)",
                path.display()
            ))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Cell {
        row,
        column: column.into(),
        message: format!("`{s}` is not a number"),
    })
}

impl ResultsTable {
    /// Builds rows in the given order and all pairwise comparisons.
    pub fn assemble(seeds: Vec<u64>, level: f64, rows: Vec<ResultRow>) -> Self {
        let mut comparisons = Vec::new();
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                if a.overlap != b.overlap {
                    continue;
                }
                let (xa, xb): (Vec<f64>, Vec<f64>) = a
                    .scores
                    .iter()
                    .zip(&b.scores)
                    .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                    .unzip();
                if let Ok(test) = paired_t_test(&xa, &xb) {
                    comparisons.push(Comparison {
                        overlap: a.overlap,
                        a: a.scenario,
                        b: b.scenario,
                        test,
                    });
                }
            }
        }
        ResultsTable {
            seeds,
            level,
            rows,
            comparisons,
        }
    }

    pub fn row(&self, scenario: Scenario, overlap: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.overlap == overlap)
    }

    pub fn mean(&self, scenario: Scenario, overlap: f64) -> Option<f64> {
        self.row(scenario, overlap)?.mean
    }

    pub fn comparison(&self, a: Scenario, b: Scenario, overlap: f64) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| {
            c.overlap == overlap && ((c.a == a && c.b == b) || (c.a == b && c.b == a))
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        for r in &self.rows {
            let scores = r.scores.iter().map(|s| opt(*s)).collect::<Vec<_>>().join(";");
            w.write_record([
                r.scenario.as_str().to_string(),
                r.overlap.to_string(),
                self.level.to_string(),
                opt(r.mean),
                opt(r.ci_lo),
                opt(r.ci_hi),
                seeds.clone(),
                scores,
                r.failures.join(" | "),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Corrupt(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Parses [`Self::to_csv`] output. Comparisons are recomputed from the
    /// per-seed scores.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Cell {
                row: 0,
                column: header.join(","),
                message: format!("expected header {}", CSV_HEADER.join(",")),
            });
        }
        let mut seeds = Vec::new();
        let mut level = 0.95;
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let scenario: Scenario = field(0).parse()?;
            let overlap = parse_opt(field(1), row, "overlap")?.ok_or_else(|| Error::Cell {
                row,
                column: "overlap".into(),
                message: "missing".into(),
            })?;
            level = parse_opt(field(2), row, "level")?.unwrap_or(level);
            seeds = field(6)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Cell {
                        row,
                        column: "seeds".into(),
                        message: format!("`{s}` is not a seed"),
                    })
                })
                .collect::<Result<_>>()?;
            let scores = if seeds.is_empty() {
                Vec::new()
            } else {
                field(7)
                    .split(';')
                    .map(|s| parse_opt(s, row, "scores"))
                    .collect::<Result<_>>()?
            };
            let failures = if field(8).is_empty() {
                Vec::new()
            } else {
                field(8).split(" | ").map(str::to_string).collect()
            };
            rows.push(ResultRow {
                scenario,
                overlap,
                scores,
                mean: parse_opt(field(3), row, "mean")?,
                ci_lo: parse_opt(field(4), row, "ci_lo")?,
                ci_hi: parse_opt(field(5), row, "ci_hi")?,
                failures,
            });
        }
        Ok(ResultsTable::assemble(seeds, level, rows))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn export(&self, path: &Path, format: ExportFormat) -> Result<()> {
        let text = match format {
            ExportFormat::Csv => self.to_csv()?,
            ExportFormat::Json => self.to_json()?,
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn import(path: &Path, format: ExportFormat) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match format {
            ExportFormat::Csv => Self::from_csv(&text),
            ExportFormat::Json => Self::from_json(&text),
        }
    }

    /// Human-readable summary, one line per row.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<16} {:>7} {:>8} {:>20} {:>7}\n",
            "scenario", "overlap", "mean F1", "CI", "failed"
        );
        for r in &self.rows {
            let mean = r.mean.map_or("n/a".into(), |m| format!("{m:.4}"));
            let ci = match (r.ci_lo, r.ci_hi) {
                (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
                _ => "n/a".into(),
            };
            let failed = r.scores.iter().filter(|x| x.is_none()).count();
            s.push_str(&format!(
                "{:<16} {:>7.2} {:>8} {:>20} {:>7}\n",
                r.scenario.as_str(),
                r.overlap,
                mean,
                ci,
                failed
            ));
        }
        s
    }
}

//! Subcommands of the `modn` binary.

use std::error::Error as StdError;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use modn::data::{
    generate_synthetic_with_rule, holdout, load_dataset, write_dataset, Answer, LabelRule, RawValue, SyntheticSpec,
};
use modn::experiments::{predict_table, run_iio_experiment, ExperimentConfig};
use modn::model::{load_model, LoadOptions, ModnModel, TrajectoryDump, DEFAULT_THRESHOLD};
use modn::training::{train_from_scratch, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::journal;
use crate::server::{serve, ServeConfig};

pub type CliResult<T = ()> = Result<T, Box<dyn StdError + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "modn", version, about = "Modular decision-support networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    Logistic,
    Threshold,
    Xor,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (CSV plus schema descriptor).
    Synth {
        /// SyntheticSpec as JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        records: Option<usize>,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Also write the generating weights as JSON.
        #[arg(long)]
        rule_out: Option<PathBuf>,
    },
    /// Train a model from scratch.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// TrainConfig as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.125)]
        val_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        /// Write the per-epoch loss report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a model on a dataset (per-target and overall macro F1).
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run the interoperability experiment described by a config file.
    Iio {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides the config's seed list.
        #[arg(long, num_args = 1..)]
        seeds: Option<Vec<u64>>,
    },
    /// Print the step-by-step trajectory of one consultation as JSON.
    Trajectory {
        #[arg(long)]
        model: PathBuf,
        /// A session log written by the service.
        #[arg(long, conflicts_with_all = ["answers", "data"])]
        log: Option<PathBuf>,
        /// JSON array of {"feature_id", "value"} objects, applied in order.
        #[arg(long, conflicts_with = "data")]
        answers: Option<PathBuf>,
        /// Dataset CSV holding the record named by --record.
        #[arg(long, requires_all = ["schema", "record"])]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        record: Option<String>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP consultation service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory holding the model registry and session logs.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Model files to register at startup.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    std::fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

#[derive(Deserialize)]
struct AnswerIn {
    feature_id: String,
    value: RawValue,
}

/// Validates answers against the model schema exactly as the service does.
pub fn canonical_answers(model: &ModnModel, raw: Vec<(String, RawValue)>) -> modn::Result<Vec<Answer>> {
    raw.into_iter()
        .map(|(feature_id, value)| {
            let f = model
                .feature(&feature_id)
                .ok_or_else(|| modn::Error::MissingEncoder(feature_id.clone()))?;
            Ok(Answer {
                value: f.canonicalize(&value)?,
                group: f.group,
                feature_id,
            })
        })
        .collect()
}

/// The trajectory dump for a service session log.
pub fn trajectory_from_log(model: &ModnModel, log: &Path, threshold: f64) -> CliResult<TrajectoryDump> {
    let events = journal::read(log).map_err(|e| format!("{}: {e}", log.display()))?;
    let replayed = journal::replay(&events)?;
    if replayed.fingerprint != model.fingerprint() {
        return Err("the session log was recorded against a different model".into());
    }
    let answers = canonical_answers(model, replayed.answers)?;
    Ok(TrajectoryDump::new(model, &model.run_answers(&answers)?, threshold))
}

/// Writes to stdout. A closed pipe (`modn ... | head`) ends the process quietly.
fn emit(args: std::fmt::Arguments) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        log::error!("writing to stdout failed: {e}");
    }
}

macro_rules! out {
    ($($arg:tt)*) => {
        emit(format_args!("{}\n", format_args!($($arg)*)))
    };
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth {
            config,
            seed,
            records,
            rule,
            out,
            schema,
            rule_out,
        } => {
            let mut spec: SyntheticSpec = match config {
                Some(p) => read_json(&p)?,
                None => SyntheticSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = records {
                spec.n_records = n;
            }
            if let Some(r) = rule {
                spec.label_rule = match r {
                    RuleArg::Logistic => LabelRule::Logistic,
                    RuleArg::Threshold => LabelRule::Threshold,
                    RuleArg::Xor => LabelRule::Xor,
                };
            }
            let (table, generating) = generate_synthetic_with_rule(&spec)?;
            write_dataset(&table, &out, &schema)?;
            if let Some(p) = rule_out {
                write_json(&p, &generating)?;
            }
            out!(
                "wrote {} records, {} features, {} targets to {}",
                table.len(),
                table.schema.len(),
                table.targets.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            schema,
            config,
            seed,
            val_fraction,
            out,
            report,
        } => {
            let table = load_dataset(&data, &schema)?;
            let config: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            let (keep, held) = holdout(table.len(), val_fraction, seed);
            let train = table.subset(&keep, "train");
            let val = table.subset(&held, "validation");
            let (model, loss) = train_from_scratch(&train, &val, &config, seed)?;
            model.save(&out)?;
            out!(
                "trained {} epochs (best epoch {}), final train loss {:.4}, best validation loss {:.4}",
                loss.epochs_run(),
                loss.best_epoch,
                loss.train_loss.last().copied().unwrap_or(f64::NAN),
                loss.val_loss.get(loss.best_epoch).copied().unwrap_or(f64::NAN)
            );
            out!("model written to {} (fingerprint {})", out.display(), model.fingerprint());
            if let Some(p) = report {
                write_json(&p, &loss)?;
            }
        }
        Command::Eval {
            model,
            data,
            schema,
            threshold,
            json,
        } => {
            let model = load_model(&model, &LoadOptions::default())?;
            let table = load_dataset(&data, &schema)?;
            let preds = predict_table(&model, &table, threshold)?;
            let per_target = preds.per_target_f1()?;
            let overall = modn::experiments::overall_f1(&per_target);
            if json {
                let scores: serde_json::Map<String, serde_json::Value> = preds
                    .targets
                    .iter()
                    .zip(&per_target)
                    .map(|(t, s)| (t.clone(), (*s).into()))
                    .collect();
                out!("{}", serde_json::json!({ "per_target": scores, "overall": overall }));
            } else {
                for (t, s) in preds.targets.iter().zip(&per_target) {
                    out!("{t:<16} {s:.4}");
                }
                out!("{:<16} {overall:.4}", "overall");
            }
        }
        Command::Iio {
            config,
            output_dir,
            seeds,
        } => {
            let mut config: ExperimentConfig = read_json(&config)?;
            if let Some(dir) = output_dir {
                config.output = Some(dir);
            }
            if let Some(s) = seeds {
                config.seeds = s;
            }
            let table = run_iio_experiment(&config)?;
            emit(format_args!("{}", table.render()));
            if let Some(dir) = &config.output {
                out!("results written to {}", dir.display());
            }
        }
        Command::Trajectory {
            model,
            log,
            answers,
            data,
            schema,
            record,
            threshold,
            out,
        } => {
            let model = load_model(&model, &LoadOptions::default())?;
            let dump = if let Some(log) = log {
                trajectory_from_log(&model, &log, threshold)?
            } else if let Some(path) = answers {
                let raw: Vec<AnswerIn> = read_json(&path)?;
                let answers = canonical_answers(&model, raw.into_iter().map(|a| (a.feature_id, a.value)).collect())?;
                TrajectoryDump::new(&model, &model.run_answers(&answers)?, threshold)
            } else if let (Some(data), Some(schema), Some(id)) = (data, schema, record) {
                let table = load_dataset(&data, &schema)?;
                let r = table
                    .records
                    .iter()
                    .find(|r| r.id == id)
                    .ok_or_else(|| format!("no record `{id}` in {}", data.display()))?;
                TrajectoryDump::new(&model, &model.run_consultation(r)?, threshold)
            } else {
                TrajectoryDump::new(&model, &model.run_answers(&[])?, threshold)
            };
            let text = serde_json::to_string_pretty(&dump)?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| format!("{}: {e}", p.display()))?,
                None => out!("{text}"),
            }
        }
        Command::Serve {
            bind,
            data_dir,
            models,
            threshold,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(ServeConfig {
                bind,
                data_dir,
                threshold,
                models,
            }))?;
        }
    }
    Ok(())
}

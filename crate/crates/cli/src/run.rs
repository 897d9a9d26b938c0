use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emcomm::analysis::{dump_codebook, message_stats, Codebook, MessageStats};
use emcomm::data::{parse_idx, AttributeValueDataset, BatchLoader, GameDataset, IdxDataset, TableDataset};
use emcomm::game::{evaluate, Checkpoint, EarlyStopping, Game, Metrics, TrainConfig, Trainer};
use emcomm::nn::Module;
use emcomm::rng;
use emcomm::zoo::{
    build_discrimination_game, build_file_game, build_reconstruction_game, write_predictions, DiscriminationDataset,
    DiscriminationSpec, FileGameSpec, FileTask, ReconstructionSpec,
};

use crate::config::{GameKind, RunConfig};
use crate::CliError;

/// A game with its data, built from a configuration.
pub struct Prepared {
    pub game: Game,
    pub train: Box<dyn GameDataset>,
    pub validation: Option<Box<dyn GameDataset>>,
    /// `(rows, cols)` when Receiver outputs can be shown as images.
    pub image_shape: Option<(usize, usize)>,
    /// The tables of a file game, for prediction files.
    pub tables: Option<(TableDataset, Option<TableDataset>)>,
}

fn is_set(p: &Path) -> bool {
    !p.as_os_str().is_empty()
}

fn attribute_items(c: &RunConfig) -> Result<AttributeValueDataset, CliError> {
    let subset = (c.n_items > 0).then_some(c.n_items);
    AttributeValueDataset::generate(c.n_attributes, c.n_values, subset, &mut rng::stream(c.seed, rng::DATA, 0))
        .map_err(CliError::validation)
}

fn image_shape_or(c: &RunConfig, default: (usize, usize)) -> (usize, usize) {
    if c.image_rows > 0 {
        (c.image_rows, c.image_cols)
    } else {
        default
    }
}

fn load_images(c: &RunConfig, images: &Path, labels: &Path) -> Result<IdxDataset, CliError> {
    let mut d = parse_idx(images, labels).map_err(CliError::validation)?;
    if c.n_images > 0 && c.n_images < d.len() {
        d.images.truncate(c.n_images * d.pixels());
        d.labels.truncate(c.n_images);
    }
    Ok(d)
}

/// Builds the game and loads its data. Parameters are drawn from the
/// `params` stream of `config.seed`, data from the `data` stream.
pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    config.validate()?;
    let c = config;
    let channel = c.channel_spec();
    let mut params = rng::stream(c.seed, rng::PARAMS, 0);
    let prepared = match c.game {
        GameKind::Reconstruction => {
            let items = attribute_items(c)?;
            let spec = ReconstructionSpec {
                dim: items.dim(),
                sender_layers: c.sender_layers.clone(),
                receiver_layers: c.receiver_layers.clone(),
                activation: c.activation,
                channel,
                blocks: c.n_attributes,
            };
            Prepared {
                game: build_reconstruction_game(&spec, &mut params).map_err(CliError::validation)?,
                train: Box::new(items.reconstruction()),
                validation: Some(Box::new(items.reconstruction())),
                image_shape: Some(image_shape_or(c, (c.n_attributes, c.n_values))),
                tables: None,
            }
        }
        GameKind::Discrimination => {
            let items = attribute_items(c)?;
            let spec = DiscriminationSpec {
                item_dim: items.dim(),
                n_candidates: c.n_candidates,
                sender_layers: c.sender_layers.clone(),
                score_dim: c.score_dim,
                activation: c.activation,
                channel,
            };
            let data = |index| {
                DiscriminationDataset::new(
                    items.dim(),
                    items.encoded(),
                    c.n_candidates,
                    rng::derive_u64(c.seed, rng::DISTRACTORS, index),
                )
                .map_err(CliError::validation)
            };
            Prepared {
                game: build_discrimination_game(&spec, &mut params).map_err(CliError::validation)?,
                train: Box::new(data(0)?),
                validation: Some(Box::new(data(1)?.frozen(0))),
                image_shape: None,
                tables: None,
            }
        }
        GameKind::File => {
            let spec = FileGameSpec {
                train: c.train_path.clone(),
                validation: is_set(&c.validation_path).then(|| c.validation_path.clone()),
                label_column: (!c.label_column.is_empty()).then(|| c.label_column.clone()),
                task: c.task,
                delimiter: c.delimiter.as_bytes()[0],
                sender_layers: c.sender_layers.clone(),
                receiver_layers: c.receiver_layers.clone(),
                activation: c.activation,
                channel,
            };
            let fg = build_file_game(&spec, &mut params).map_err(CliError::validation)?;
            let image_shape = (c.task == FileTask::Reconstruction).then(|| image_shape_or(c, (1, fg.train.dim())));
            Prepared {
                game: fg.game,
                train: Box::new(fg.train.clone()),
                validation: fg.validation.clone().map(|v| Box::new(v) as Box<dyn GameDataset>),
                image_shape,
                tables: Some((fg.train, fg.validation)),
            }
        }
        GameKind::Mnist => {
            let train = load_images(c, &c.images_path, &c.labels_path)?;
            let validation = if is_set(&c.validation_images_path) {
                let v = load_images(c, &c.validation_images_path, &c.validation_labels_path)?;
                if (v.rows, v.cols) != (train.rows, train.cols) {
                    return Err(CliError::Validation(format!(
                        "validation images are {}x{}, training images {}x{}",
                        v.rows, v.cols, train.rows, train.cols
                    )));
                }
                Some(Box::new(v.reconstruction().map_err(CliError::validation)?) as Box<dyn GameDataset>)
            } else {
                None
            };
            let spec = ReconstructionSpec {
                dim: train.pixels(),
                sender_layers: c.sender_layers.clone(),
                receiver_layers: c.receiver_layers.clone(),
                activation: c.activation,
                channel,
                blocks: 1,
            };
            Prepared {
                game: build_reconstruction_game(&spec, &mut params).map_err(CliError::validation)?,
                train: Box::new(train.reconstruction().map_err(CliError::validation)?),
                validation,
                image_shape: Some(image_shape_or(c, (train.rows, train.cols))),
                tables: None,
            }
        }
    };
    Ok(Prepared {
        game: prepared.game.with_entropy_coeff(c.entropy_coeff),
        ..prepared
    })
}

pub fn train_config(c: &RunConfig) -> TrainConfig {
    let mut t = TrainConfig::new(c.epochs, c.batch_size, c.optimizer_config(), c.seed);
    t.shuffle = c.shuffle;
    t.checkpoint_every = c.checkpoint_every;
    if c.patience > 0 {
        t.early_stopping = Some(EarlyStopping {
            patience: c.patience,
            metric: c.stop_metric.clone(),
            goal: c.stop_goal,
        });
    }
    if !c.target.is_nan() {
        t.stop_at = Some((c.stop_metric.clone(), c.target, c.stop_goal));
    }
    t.out_dir = Some(c.out_dir.clone());
    t
}

/// Final record of a training run, written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epochs: usize,
    pub stopped_early: bool,
    pub reached_target: bool,
    pub train: Metrics,
    pub validation: Option<Metrics>,
    /// Statistics of the greedy messages on the training data.
    pub messages: MessageStats,
}

impl RunSummary {
    /// Metrics of the monitored split (validation when present), flattened,
    /// plus the number of epochs run.
    pub fn final_metrics(&self) -> BTreeMap<String, f64> {
        let m = self.validation.as_ref().unwrap_or(&self.train);
        let mut out = m.aux.clone();
        out.insert("loss".into(), m.loss);
        out.insert("mean_length".into(), m.mean_length);
        out.insert("epochs".into(), self.epochs as f64);
        out
    }
}

fn greedy_messages(game: &Game, data: &dyn GameDataset, batch_size: usize) -> Result<MessageStats, CliError> {
    let loader = BatchLoader::new(batch_size, false, 0).map_err(CliError::runtime)?;
    let interactions = loader
        .batches(data, 0)
        .map(|b| b.and_then(|b| game.evaluate_batch(&b)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::runtime)?;
    message_stats(&interactions).map_err(CliError::runtime)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Trains one configuration. Everything the run writes goes under
/// `config.out_dir`: `config.toml`, `metrics.jsonl`, `timing.jsonl`,
/// `checkpoints/`, `summary.json` and, for file games, prediction tables.
/// With `resume`, training continues from that checkpoint and the logs are
/// appended to.
pub fn cmd_train(config: &RunConfig, resume: Option<&Path>) -> Result<RunSummary, CliError> {
    let prepared = prepare(config)?;
    let checkpoint = resume.map(Checkpoint::load).transpose().map_err(CliError::validation)?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    if checkpoint.is_none() {
        for stale in ["metrics.jsonl", "timing.jsonl"] {
            let p = dir.join(stale);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            }
        }
    }
    write(&dir.join("config.toml"), config.to_toml())?;

    let Prepared {
        game,
        train,
        validation,
        tables,
        ..
    } = prepared;
    let tc = train_config(config);
    let mut trainer = match &checkpoint {
        Some(ck) => Trainer::resume(game, tc, ck).map_err(CliError::validation)?,
        None => Trainer::new(game, tc).map_err(CliError::validation)?,
    };
    trainer.fit(train.as_ref(), validation.as_deref()).map_err(CliError::runtime)?;

    let history = trainer.history().clone();
    let game = trainer.into_game();
    let train_metrics = match history.last("train") {
        Some(r) => r.metrics.clone(),
        None => evaluate(&game, train.as_ref(), config.batch_size, 0).map_err(CliError::runtime)?,
    };
    let summary = RunSummary {
        epochs: history.epochs().max(checkpoint.as_ref().map_or(0, |c| c.epoch as usize)),
        stopped_early: history.stopped_early,
        reached_target: history.reached_target,
        train: train_metrics,
        validation: history.last("validation").map(|r| r.metrics.clone()),
        messages: greedy_messages(&game, train.as_ref(), config.batch_size)?,
    };
    if let Some((train_table, val_table)) = &tables {
        write_predictions(&game, train_table, dir.join("predictions.csv")).map_err(CliError::runtime)?;
        if let Some(v) = val_table {
            write_predictions(&game, v, dir.join("validation_predictions.csv")).map_err(CliError::runtime)?;
        }
    }
    let json = serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?;
    write(&dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

fn restore(config: &RunConfig, checkpoint: &Path) -> Result<Prepared, CliError> {
    let prepared = prepare(config)?;
    let ck = Checkpoint::load(checkpoint).map_err(CliError::validation)?;
    ck.load_params(&prepared.game.parameters()).map_err(CliError::validation)?;
    Ok(prepared)
}

/// Greedy-decoding metrics of a checkpoint on the configured data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train: Metrics,
    pub validation: Option<Metrics>,
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> Result<EvalReport, CliError> {
    let p = restore(config, checkpoint)?;
    let bs = config.batch_size;
    Ok(EvalReport {
        train: evaluate(&p.game, p.train.as_ref(), bs, 0).map_err(CliError::runtime)?,
        validation: p
            .validation
            .as_deref()
            .map(|v| evaluate(&p.game, v, bs, 0))
            .transpose()
            .map_err(CliError::runtime)?,
    })
}

/// Writes the Receiver's output for every possible message as images under
/// `out_dir` (see [`dump_codebook`]).
pub fn cmd_dump(config: &RunConfig, checkpoint: &Path, out_dir: &Path) -> Result<Codebook, CliError> {
    let p = restore(config, checkpoint)?;
    let shape = p.image_shape.ok_or_else(|| {
        CliError::Validation("this game's Receiver output is not image-shaped; dump needs a reconstruction game".into())
    })?;
    dump_codebook(p.game.receiver(), shape, out_dir).map_err(CliError::validation)
}

/// `config.toml` of the run that wrote `checkpoint` (`<run>/checkpoints/x.ckpt`).
pub fn run_config_of(checkpoint: &Path) -> Option<PathBuf> {
    let p = checkpoint.parent()?.parent()?.join("config.toml");
    p.is_file().then_some(p)
}

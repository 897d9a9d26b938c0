//! Games defined by numeric tables on disk.
//!
//! A table is delimited text. The first row is a header of column names;
//! every later row holds one number per column. For classification, the
//! label column holds class indices `0, 1, ...` and all other columns are
//! the Sender input. For reconstruction, every column except an optional
//! label column is both input and target and must lie in `[0, 1]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::data::{BatchLoader, GameDataset, TableDataset, TableLabels};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::nn::Activation;
use crate::rng::Rng;
use crate::tensor::argmax;

use super::reconstruction::SigmoidDecoder;
use super::{cross_entropy, mlp_core, BinaryCrossEntropy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileTask {
    Classification,
    Reconstruction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileGameSpec {
    pub train: PathBuf,
    pub validation: Option<PathBuf>,
    pub label_column: Option<String>,
    pub task: FileTask,
    pub delimiter: u8,
    pub sender_layers: Vec<usize>,
    pub receiver_layers: Vec<usize>,
    pub activation: Activation,
    pub channel: ChannelSpec,
}

pub struct FileGame {
    pub game: Game,
    pub train: TableDataset,
    pub validation: Option<TableDataset>,
    /// Number of classes for classification tables.
    pub n_classes: Option<usize>,
}

fn parse_error(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message,
    }
}

/// Reads a table (see the module docs for the grammar).
pub fn read_table(path: impl AsRef<Path>, delimiter: u8, label_column: Option<&str>, task: FileTask) -> Result<TableDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_error(path, 1, format!("{other:?}")),
        })?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(path, 1, e.to_string()))?,
        None => return Err(parse_error(path, 1, "missing header row".into())),
    };
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_error(path, 1, format!("missing label column {name:?}")))?,
        ),
        None if task == FileTask::Classification => {
            return Err(parse_error(path, 1, "classification needs a label column".into()));
        }
        None => None,
    };
    let width = header.len();
    let dim = width - usize::from(label_idx.is_some());
    if dim == 0 {
        return Err(parse_error(path, 1, "no input columns".into()));
    }
    let mut inputs = Vec::new();
    let mut classes = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_error(
                path,
                line,
                format!("expected {width} fields as in the header, found {}", record.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_error(path, line, format!("non-numeric cell {cell:?} in column {:?}", &header[i])))?;
            if Some(i) == label_idx {
                if task == FileTask::Classification {
                    if value < 0.0 || value.fract() != 0.0 {
                        return Err(parse_error(path, line, format!("label {cell:?} is not a class index")));
                    }
                    classes.push(value as usize);
                }
            } else {
                if task == FileTask::Reconstruction && !(0.0..=1.0).contains(&value) {
                    return Err(parse_error(path, line, format!("value {value} outside [0, 1]")));
                }
                inputs.push(value);
            }
        }
    }
    if inputs.is_empty() {
        return Err(parse_error(path, 1, "table has no data rows".into()));
    }
    let labels = match task {
        FileTask::Classification => TableLabels::Classes(classes),
        FileTask::Reconstruction => TableLabels::Inputs,
    };
    TableDataset::new(dim, inputs, labels)
}

pub fn build_file_game(spec: &FileGameSpec, rng: &mut Rng) -> Result<FileGame> {
    let label = spec.label_column.as_deref();
    let train = read_table(&spec.train, spec.delimiter, label, spec.task)?;
    let validation = spec
        .validation
        .as_ref()
        .map(|p| read_table(p, spec.delimiter, label, spec.task))
        .transpose()?;
    if let Some(v) = &validation {
        if v.dim() != train.dim() {
            return Err(Error::invalid(format!(
                "validation table has {} input columns, training table {}",
                v.dim(),
                train.dim()
            )));
        }
    }
    let ch = &spec.channel;
    let encoder = mlp_core(train.dim(), &spec.sender_layers, ch.sender_core_output(), spec.activation, rng)?;
    let sender = ch.sender(Box::new(encoder), rng)?;
    let (game, n_classes) = match spec.task {
        FileTask::Classification => {
            let max_class = [Some(&train), validation.as_ref()]
                .into_iter()
                .flatten()
                .filter_map(|t| match t.labels() {
                    TableLabels::Classes(c) => c.iter().copied().max(),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            let n = max_class + 1;
            let head = mlp_core(ch.receiver_core_input(), &spec.receiver_layers, n, spec.activation, rng)?;
            let receiver = ch.receiver(Box::new(head), rng)?;
            (Game::new(sender, receiver, Box::new(cross_entropy))?, Some(n))
        }
        FileTask::Reconstruction => {
            let head = mlp_core(ch.receiver_core_input(), &spec.receiver_layers, train.dim(), spec.activation, rng)?;
            let receiver = ch.receiver(Box::new(SigmoidDecoder(head)), rng)?;
            (Game::new(sender, receiver, Box::new(BinaryCrossEntropy { blocks: 1 }))?, None)
        }
    };
    Ok(FileGame {
        game,
        train,
        validation,
        n_classes,
    })
}

/// Writes one row per item: its index, the greedy message (symbols up to and
/// including eos, space-separated) and the Receiver's prediction; a class and
/// the true label for classification, one column per output otherwise.
pub fn write_predictions(game: &Game, data: &TableDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.into(),
            message: format!("{other:?}"),
        },
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let classes = match data.labels() {
        TableLabels::Classes(c) => Some(c),
        _ => None,
    };
    let mut header = vec!["row".to_string(), "message".to_string()];
    match classes {
        Some(_) => header.extend(["prediction".to_string(), "label".to_string()]),
        None => header.extend((0..data.dim()).map(|i| format!("out_{i}"))),
    }
    w.write_record(&header).map_err(csv_err)?;
    let loader = BatchLoader::new(256, false, 0)?;
    for indices in loader.index_batches(data.len(), 0) {
        let it = game.evaluate_batch(&data.batch(&indices, 0)?)?;
        let width = it.receiver_output.shape[1];
        for (r, &item) in indices.iter().enumerate() {
            let message: Vec<String> = it.message(r).iter().map(usize::to_string).collect();
            let out = &it.receiver_output.values[r * width..(r + 1) * width];
            let mut row = vec![item.to_string(), message.join(" ")];
            match classes {
                Some(c) => row.extend([argmax(out).to_string(), c[item].to_string()]),
                None => row.extend(out.iter().map(|v| v.to_string())),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

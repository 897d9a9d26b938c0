//! Flat run configuration: a TOML table of `key = value` pairs, every key
//! optional, plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emcomm::channel::{ChannelMode, ChannelSpec, MessageKind, VocabSpec};
use emcomm::game::Goal;
use emcomm::nn::{Activation, CellKind, OptimizerConfig};
use emcomm::zoo::FileTask;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    /// Autoencoding of synthetic attribute-value items.
    Reconstruction,
    /// Pick the Sender's item among `n_candidates` attribute-value items.
    Discrimination,
    /// Classification or reconstruction of a delimited table.
    File,
    /// Autoencoding of IDX images.
    Mnist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Gs,
    Reinforce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameKind,

    pub n_attributes: usize,
    pub n_values: usize,
    /// Sample this many distinct items; 0 keeps all `n_values^n_attributes`.
    pub n_items: usize,
    pub n_candidates: usize,
    pub score_dim: usize,

    pub train_path: PathBuf,
    pub validation_path: PathBuf,
    pub label_column: String,
    pub task: FileTask,
    pub delimiter: String,

    pub images_path: PathBuf,
    pub labels_path: PathBuf,
    pub validation_images_path: PathBuf,
    pub validation_labels_path: PathBuf,
    /// Use only the first this many images; 0 keeps all.
    pub n_images: usize,
    /// Shape used to render Receiver outputs as images; 0 picks a default.
    pub image_rows: usize,
    pub image_cols: usize,

    pub channel: ChannelKind,
    pub message: MessageKind,
    pub vocab_size: usize,
    pub max_len: usize,
    pub cell: CellKind,
    pub embed_dim: usize,
    pub sender_hidden: usize,
    pub receiver_hidden: usize,
    pub sender_layers: Vec<usize>,
    pub receiver_layers: Vec<usize>,
    pub activation: Activation,
    pub temperature: f64,
    pub straight_through: bool,
    pub entropy_coeff: f64,

    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    pub patience: usize,
    pub stop_metric: String,
    pub stop_goal: Goal,
    /// Stop once `stop_metric` reaches this value; NaN disables.
    pub target: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            game: GameKind::Reconstruction,
            n_attributes: 1,
            n_values: 8,
            n_items: 0,
            n_candidates: 5,
            score_dim: 32,
            train_path: PathBuf::new(),
            validation_path: PathBuf::new(),
            label_column: String::new(),
            task: FileTask::Classification,
            delimiter: ",".into(),
            images_path: PathBuf::new(),
            labels_path: PathBuf::new(),
            validation_images_path: PathBuf::new(),
            validation_labels_path: PathBuf::new(),
            n_images: 0,
            image_rows: 0,
            image_cols: 0,
            channel: ChannelKind::Gs,
            message: MessageKind::Symbol,
            vocab_size: 10,
            max_len: 2,
            cell: CellKind::Lstm,
            embed_dim: 32,
            sender_hidden: 20,
            receiver_hidden: 20,
            sender_layers: vec![32],
            receiver_layers: Vec::new(),
            activation: Activation::Tanh,
            temperature: 1.0,
            straight_through: false,
            entropy_coeff: 0.0,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 10,
            batch_size: 32,
            shuffle: true,
            patience: 0,
            stop_metric: "loss".into(),
            stop_goal: Goal::Minimize,
            target: f64::NAN,
            checkpoint_every: 0,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "game",
    "n_attributes",
    "n_values",
    "n_items",
    "n_candidates",
    "score_dim",
    "train_path",
    "validation_path",
    "label_column",
    "task",
    "delimiter",
    "images_path",
    "labels_path",
    "validation_images_path",
    "validation_labels_path",
    "n_images",
    "image_rows",
    "image_cols",
    "channel",
    "message",
    "vocab_size",
    "max_len",
    "cell",
    "embed_dim",
    "sender_hidden",
    "receiver_hidden",
    "sender_layers",
    "receiver_layers",
    "activation",
    "temperature",
    "straight_through",
    "entropy_coeff",
    "optimizer",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "epochs",
    "batch_size",
    "shuffle",
    "patience",
    "stop_metric",
    "stop_goal",
    "target",
    "checkpoint_every",
    "seed",
    "out_dir",
];

/// Error for a key that is not in [`KEYS`], with the closest known key.
pub fn unknown_key(key: &str) -> CliError {
    let best = KEYS
        .iter()
        .map(|k| (strsim::damerau_levenshtein(key, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3);
    let hint = best.map_or(String::new(), |(_, k)| format!("; did you mean \"{k}\"?"));
    CliError::Validation(format!("unknown configuration key \"{key}\"{hint}"))
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to
/// a plain string for bare words such as `gs`.
pub fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// `key=value` into its parts.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override \"{s}\" is not of the form key=value")))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(unknown_key(k));
    }
    Ok((k.to_string(), parse_value(v.trim())))
}

impl RunConfig {
    /// Builds a configuration from a table: defaults, overwritten by the
    /// table's keys. Unknown keys and ill-typed values are rejected.
    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        if let Some(k) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(unknown_key(k));
        }
        let config: RunConfig = toml::Value::Table(table.clone()).try_into().map_err(|e: toml::de::Error| {
            // serde reports the bad type but not always the key; find it by trying keys one at a time
            let culprit = table.iter().find(|(k, v)| {
                let mut single = toml::Table::new();
                single.insert((*k).clone(), (*v).clone());
                toml::Value::Table(single).try_into::<RunConfig>().is_err()
            });
            match culprit {
                Some((k, _)) => CliError::Validation(format!("{k}: {}", e.message())),
                None => CliError::Validation(format!("invalid configuration: {}", e.message())),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// File values (if any) overridden by `overrides`, in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => read_table(p)?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        Self::from_table(table)
    }

    pub fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::try_from(self).expect("configuration serializes to a table");
        if self.target.is_nan() {
            t.remove("target");
        }
        t
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("configuration serializes")
    }

    /// Checks every field; called before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: String| Err(CliError::Validation(format!("{key}: {why}")));
        let positive = [
            ("n_attributes", self.n_attributes),
            ("score_dim", self.score_dim),
            ("embed_dim", self.embed_dim),
            ("sender_hidden", self.sender_hidden),
            ("receiver_hidden", self.receiver_hidden),
            ("max_len", self.max_len),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return bad(k, "must be at least 1".into());
            }
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("must be at most {}", i64::MAX));
        }
        if let Some(i) = self.sender_layers.iter().chain(&self.receiver_layers).position(|&w| w == 0) {
            let key = if i < self.sender_layers.len() { "sender_layers" } else { "receiver_layers" };
            return bad(key, "layer widths must be at least 1".into());
        }
        if self.vocab_size < 2 {
            return bad("vocab_size", format!("needs at least 2 symbols, got {}", self.vocab_size));
        }
        if self.n_values < 2 {
            return bad("n_values", format!("needs at least 2 values, got {}", self.n_values));
        }
        let total = u32::try_from(self.n_attributes)
            .ok()
            .and_then(|a| self.n_values.checked_pow(a))
            .filter(|&t| t <= 1 << 20);
        if matches!(self.game, GameKind::Reconstruction | GameKind::Discrimination) {
            let Some(total) = total else {
                return bad("n_attributes", "too many attribute combinations to enumerate".into());
            };
            if self.n_items > total {
                return bad("n_items", format!("{} exceeds the {total} distinct items", self.n_items));
            }
            let items = if self.n_items == 0 { total } else { self.n_items };
            if self.game == GameKind::Discrimination && (self.n_candidates < 2 || self.n_candidates > items) {
                return bad(
                    "n_candidates",
                    format!("must lie in [2, {items}], got {}", self.n_candidates),
                );
            }
        }
        let finite_positive = [("temperature", self.temperature), ("lr", self.lr), ("eps", self.eps)];
        for (k, v) in finite_positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(k, format!("must be a positive number, got {v}"));
            }
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(k, format!("must lie in [0, 1), got {v}"));
            }
        }
        if !(self.entropy_coeff.is_finite() && self.entropy_coeff >= 0.0) {
            return bad("entropy_coeff", format!("must be a non-negative number, got {}", self.entropy_coeff));
        }
        if self.target.is_infinite() {
            return bad("target", "must be finite".into());
        }
        if self.stop_metric.is_empty() {
            return bad("stop_metric", "must name a metric".into());
        }
        if self.delimiter.len() != 1 {
            return bad("delimiter", format!("must be a single byte, got {:?}", self.delimiter));
        }
        if (self.image_rows == 0) != (self.image_cols == 0) {
            return bad("image_rows", "image_rows and image_cols are set together".into());
        }
        let required = |key: &str, p: &Path| -> Result<(), CliError> {
            if p.as_os_str().is_empty() {
                return bad(key, format!("is required for game = \"{}\"", self.game_name()));
            }
            if !p.is_file() {
                return bad(key, format!("{} does not exist", p.display()));
            }
            Ok(())
        };
        let optional = |key: &str, p: &Path| -> Result<(), CliError> {
            if !p.as_os_str().is_empty() && !p.is_file() {
                return bad(key, format!("{} does not exist", p.display()));
            }
            Ok(())
        };
        match self.game {
            GameKind::File => {
                required("train_path", &self.train_path)?;
                optional("validation_path", &self.validation_path)?;
                if self.task == FileTask::Classification && self.label_column.is_empty() {
                    return bad("label_column", "is required for classification tables".into());
                }
            }
            GameKind::Mnist => {
                required("images_path", &self.images_path)?;
                required("labels_path", &self.labels_path)?;
                optional("validation_images_path", &self.validation_images_path)?;
                optional("validation_labels_path", &self.validation_labels_path)?;
                if self.validation_images_path.as_os_str().is_empty() != self.validation_labels_path.as_os_str().is_empty() {
                    return bad("validation_images_path", "validation images and labels are set together".into());
                }
            }
            GameKind::Reconstruction | GameKind::Discrimination => {}
        }
        self.channel_spec().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    fn game_name(&self) -> &'static str {
        match self.game {
            GameKind::Reconstruction => "reconstruction",
            GameKind::Discrimination => "discrimination",
            GameKind::File => "file",
            GameKind::Mnist => "mnist",
        }
    }

    pub fn mode(&self) -> ChannelMode {
        match self.channel {
            ChannelKind::Gs => ChannelMode::Gs {
                temperature: self.temperature,
                straight_through: self.straight_through,
            },
            ChannelKind::Reinforce => ChannelMode::Reinforce,
        }
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        let mut spec = ChannelSpec {
            kind: self.message,
            mode: self.mode(),
            vocab_size: self.vocab_size,
            max_len: self.max_len,
            cell: self.cell,
            embed_dim: self.embed_dim,
            sender_hidden: self.sender_hidden,
            receiver_hidden: self.receiver_hidden,
        };
        if self.message == MessageKind::Symbol {
            spec.max_len = 1;
        }
        spec
    }

    pub fn vocab(&self) -> Result<VocabSpec, CliError> {
        self.channel_spec().vocab().map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Adam => OptimizerConfig::Adam {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            OptimizerKind::Sgd => OptimizerConfig::Sgd { lr: self.lr },
        }
    }
}

pub fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
}

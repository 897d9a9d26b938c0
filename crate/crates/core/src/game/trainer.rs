use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, NamedArray};
use super::{Game, Interaction};
use crate::data::{BatchLoader, GameDataset};
use crate::error::{Error, Result};
use crate::nn::{zero_grads, Module, NamedParams, Optimizer, OptimizerConfig, OptimizerState};
use crate::rng::{self, Rng, RngState};
use crate::tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Minimize,
    Maximize,
}

impl Goal {
    /// Strict improvement by more than 1e-12.
    pub fn improves(self, value: f64, best: f64) -> bool {
        match self {
            Goal::Minimize => value < best - 1e-12,
            Goal::Maximize => value > best + 1e-12,
        }
    }

    pub fn reached(self, value: f64, threshold: f64) -> bool {
        match self {
            Goal::Minimize => value <= threshold,
            Goal::Maximize => value >= threshold,
        }
    }
}

/// Stop once `metric` has not improved for `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub metric: String,
    pub goal: Goal,
}

impl EarlyStopping {
    pub fn on_loss(patience: usize) -> Self {
        EarlyStopping {
            patience,
            metric: "loss".into(),
            goal: Goal::Minimize,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0: only the final one).
    pub checkpoint_every: usize,
    pub early_stopping: Option<EarlyStopping>,
    /// Stop as soon as the monitored split reaches this value of a metric.
    pub stop_at: Option<(String, f64, Goal)>,
    /// Metrics log, timings and checkpoints go here when set.
    pub out_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, optimizer: OptimizerConfig, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            shuffle: true,
            optimizer,
            seed,
            checkpoint_every: 0,
            early_stopping: None,
            stop_at: None,
            out_dir: None,
        }
    }
}

/// Mean loss, mean auxiliary metrics and mean message length over a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub loss: f64,
    pub mean_length: f64,
    pub aux: BTreeMap<String, f64>,
}

impl Metrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "loss" => Some(self.loss),
            "mean_length" => Some(self.mean_length),
            _ => self.aux.get(name).copied(),
        }
    }

    fn add(&mut self, it: &Interaction) {
        self.count += it.len();
        self.loss += it.loss.iter().sum::<f64>();
        self.mean_length += it.lengths.iter().sum::<usize>() as f64;
        for (k, v) in &it.aux {
            *self.aux.entry(k.clone()).or_default() += v.iter().sum::<f64>();
        }
    }

    fn finish(mut self) -> Self {
        let n = self.count.max(1) as f64;
        self.loss /= n;
        self.mean_length /= n;
        self.aux.values_mut().for_each(|v| *v /= n);
        self
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub reached_target: bool,
}

impl History {
    pub fn split(&self, split: &str) -> impl Iterator<Item = &EpochRecord> {
        let split = split.to_owned();
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn last(&self, split: &str) -> Option<&EpochRecord> {
        self.split(split).last()
    }

    pub fn epochs(&self) -> usize {
        self.records.last().map_or(0, |r| r.epoch)
    }
}

/// Mean metrics of greedy decoding over `data`. Never changes the game.
pub fn evaluate(game: &Game, data: &dyn GameDataset, batch_size: usize, epoch: u64) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let loader = BatchLoader::new(batch_size, false, 0)?;
    let mut m = Metrics::default();
    for batch in loader.batches(data, epoch) {
        m.add(&game.evaluate_batch(&batch?)?);
    }
    Ok(m.finish())
}

pub struct Trainer {
    game: Game,
    params: NamedParams,
    optimizer: Optimizer,
    config: TrainConfig,
    sampling: Rng,
    epoch: usize,
    early: EarlyStopState,
    history: History,
}

impl Trainer {
    pub fn new(game: Game, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if let Some(es) = &config.early_stopping {
            if es.patience == 0 {
                return Err(Error::invalid("patience must be at least 1"));
            }
        }
        let params = game.parameters();
        Ok(Trainer {
            optimizer: config.optimizer.build(&params),
            sampling: rng::stream(config.seed, rng::SAMPLING, 0),
            params,
            game,
            config,
            epoch: 0,
            early: EarlyStopState::default(),
            history: History::default(),
        })
    }

    /// Continues from a checkpoint written by a run with the same
    /// architecture and seed.
    pub fn resume(game: Game, config: TrainConfig, checkpoint: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(game, config)?;
        checkpoint.load_params(&t.params)?;
        let pairs = |xs: &[NamedArray]| xs.iter().map(|a| (a.name.clone(), a.values.clone())).collect();
        let state = OptimizerState {
            step: checkpoint.optimizer_step,
            first_moments: pairs(&checkpoint.first_moments),
            second_moments: pairs(&checkpoint.second_moments),
        };
        t.optimizer.load_state(&state, &t.params)?;
        t.game.set_baseline(checkpoint.baseline);
        t.sampling = checkpoint.rng.restore();
        t.early = checkpoint.early_stop;
        t.epoch = checkpoint.epoch as usize;
        Ok(t)
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn into_game(self) -> Game {
        self.game
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let state = self.optimizer.state(&self.params);
        let arrays = |xs: Vec<(String, Vec<f64>)>| {
            xs.into_iter()
                .map(|(name, values)| {
                    let shape = self
                        .params
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map_or_else(|| vec![values.len()], |(_, t)| t.shape().to_vec());
                    NamedArray { name, shape, values }
                })
                .collect()
        };
        Checkpoint {
            epoch: self.epoch as u64,
            params: Checkpoint::params_of(&self.params),
            optimizer_step: state.step,
            first_moments: arrays(state.first_moments),
            second_moments: arrays(state.second_moments),
            baseline: self.game.baseline(),
            rng: RngState::capture(&self.sampling),
            early_stop: self.early,
        }
    }

    /// Trains until `config.epochs` epochs are done in total or a stopping
    /// rule fires. Validation runs after every epoch when `val` is given and
    /// drives the stopping rules; otherwise the training metrics do.
    pub fn fit(&mut self, train: &dyn GameDataset, val: Option<&dyn GameDataset>) -> Result<&History> {
        if train.is_empty() {
            return Err(Error::invalid("training data is empty"));
        }
        let mut log = self.config.out_dir.as_deref().map(Logs::open).transpose()?;
        let loader = BatchLoader::new(self.config.batch_size, self.config.shuffle, self.config.seed)?;
        while self.epoch < self.config.epochs {
            let epoch = self.epoch + 1;
            let started = Instant::now();
            let train_metrics = match self.train_epoch(train, &loader, epoch) {
                Ok(m) => m,
                Err(e) => {
                    if let (Some(log), Error::NonFiniteLoss { epoch, batch }) = (&mut log, &e) {
                        log.diagnostic(*epoch, *batch)?;
                    }
                    return Err(e);
                }
            };
            let mut records = vec![EpochRecord {
                epoch,
                split: "train".into(),
                metrics: train_metrics,
            }];
            if let Some(val) = val {
                records.push(EpochRecord {
                    epoch,
                    split: "validation".into(),
                    metrics: evaluate(&self.game, val, self.config.batch_size, epoch as u64)?,
                });
            }
            self.epoch = epoch;
            let monitored = records.last().expect("at least the training record").metrics.clone();
            if let Some(log) = &mut log {
                for r in &records {
                    log.record(r)?;
                }
                log.timing(epoch, started.elapsed().as_secs_f64())?;
            }
            self.history.records.extend(records);

            let mut stop = false;
            if let Some(es) = &self.config.early_stopping {
                let value = metric(&monitored, &es.metric)?;
                match self.early.best {
                    Some(best) if !es.goal.improves(value, best) => {
                        self.early.bad_epochs += 1;
                        if self.early.bad_epochs >= es.patience {
                            self.history.stopped_early = true;
                            stop = true;
                        }
                    }
                    _ => {
                        self.early.best = Some(value);
                        self.early.bad_epochs = 0;
                    }
                }
            }
            if let Some((name, threshold, goal)) = &self.config.stop_at {
                if goal.reached(metric(&monitored, name)?, *threshold) {
                    self.history.reached_target = true;
                    stop = true;
                }
            }
            let every = self.config.checkpoint_every;
            if let Some(dir) = &self.config.out_dir {
                if every > 0 && epoch % every == 0 {
                    self.checkpoint().save(dir.join(format!("checkpoints/epoch_{epoch:04}.ckpt")))?;
                }
            }
            if stop {
                break;
            }
        }
        if let Some(dir) = &self.config.out_dir {
            self.checkpoint().save(dir.join("checkpoints/final.ckpt"))?;
        }
        Ok(&self.history)
    }

    fn train_epoch(&mut self, data: &dyn GameDataset, loader: &BatchLoader, epoch: usize) -> Result<Metrics> {
        let mut m = Metrics::default();
        for (i, indices) in loader.index_batches(data.len(), epoch as u64).into_iter().enumerate() {
            let batch = data.batch(&indices, epoch as u64)?;
            tensor::reset();
            zero_grads(&self.params);
            let (objective, interaction) = self.game.forward(&batch, &mut self.sampling)?;
            let value = objective.item()?;
            if !value.is_finite() || interaction.loss.iter().any(|l| !l.is_finite()) {
                tensor::reset();
                return Err(Error::NonFiniteLoss { epoch, batch: i + 1 });
            }
            objective.backward()?;
            self.optimizer.step(&self.params)?;
            m.add(&interaction);
        }
        Ok(m.finish())
    }
}

fn metric(m: &Metrics, name: &str) -> Result<f64> {
    m.get(name)
        .ok_or_else(|| Error::invalid(format!("unknown metric {name:?} for stopping")))
}

/// `metrics.jsonl` holds one record per epoch and split (and a diagnostic
/// record if training aborts); wall-clock times go to `timing.jsonl` so the
/// metrics log itself is a deterministic function of the run.
struct Logs {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
}

impl Logs {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            let f = OpenOptions::new().create(true).append(true).open(&p).map_err(|e| Error::io(&p, e))?;
            Ok(BufWriter::new(f))
        };
        Ok(Logs {
            metrics: open("metrics.jsonl")?,
            timing: open("timing.jsonl")?,
        })
    }

    fn line(w: &mut BufWriter<File>, value: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut *w, value)?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(|e| Error::io("metrics log", e))
    }

    fn record(&mut self, r: &EpochRecord) -> Result<()> {
        Self::line(&mut self.metrics, r)
    }

    fn timing(&mut self, epoch: usize, seconds: f64) -> Result<()> {
        Self::line(&mut self.timing, &serde_json::json!({ "epoch": epoch, "wall_time_s": seconds }))
    }

    fn diagnostic(&mut self, epoch: usize, batch: usize) -> Result<()> {
        let record = serde_json::json!({
            "event": "non_finite_loss",
            "epoch": epoch,
            "batch": batch,
        });
        Self::line(&mut self.metrics, &record)
    }
}

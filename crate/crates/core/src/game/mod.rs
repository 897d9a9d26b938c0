//! One game: data in, message across the channel, Receiver output, loss.
//!
//! Under Gumbel-Softmax the objective is the mean per-sample loss and
//! gradients reach the Sender through the relaxed message. Under REINFORCE the
//! objective is the score-function surrogate (plus an optional entropy bonus),
//! so the Sender learns from the loss values while a differentiable Receiver
//! still gets exact gradients.

mod checkpoint;
mod trainer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{
    reinforce_surrogate, ChannelMode, Decoding, Message, MessageKind, Receiver, RelaxedMessage, RunningMeanBaseline,
    Sender,
};
use crate::error::{Error, Result};
use crate::nn::{prefixed, Module, NamedParams};
use crate::rng::Rng;
use crate::tensor::{self, Tensor};

pub use checkpoint::{Checkpoint, NamedArray, CHECKPOINT_VERSION};
pub use trainer::{evaluate, EarlyStopState, EarlyStopping, EpochRecord, Goal, History, Metrics, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    None,
    /// One class index per sample.
    Classes(Vec<usize>),
    /// One target row per sample.
    Targets(Tensor),
}

impl Labels {
    fn rows(&self) -> Option<usize> {
        match self {
            Labels::None => None,
            Labels::Classes(c) => Some(c.len()),
            Labels::Targets(t) => t.shape().first().copied(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GameBatch {
    pub sender_input: Tensor,
    pub receiver_input: Option<Tensor>,
    pub labels: Labels,
}

impl GameBatch {
    pub fn new(sender_input: Tensor, receiver_input: Option<Tensor>, labels: Labels) -> Result<Self> {
        let b = sender_input
            .shape()
            .first()
            .copied()
            .ok_or_else(|| Error::invalid("sender input needs a batch dimension"))?;
        let rcv = receiver_input.as_ref().map(|r| r.shape().first().copied());
        if matches!(rcv, Some(r) if r != Some(b)) || matches!(labels.rows(), Some(r) if r != b) {
            return Err(Error::invalid(format!(
                "batch dimensions disagree: sender input {b}, receiver input {:?}, labels {:?}",
                rcv.flatten(),
                labels.rows()
            )));
        }
        Ok(GameBatch {
            sender_input,
            receiver_input,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.sender_input.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-sample loss `[B]` and named per-sample auxiliary metrics.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub per_sample: Tensor,
    pub aux: BTreeMap<String, Vec<f64>>,
}

pub trait GameLoss {
    fn loss(&self, batch: &GameBatch, receiver_output: &Tensor, message: &Message) -> Result<LossOutput>;
}

impl<F> GameLoss for F
where
    F: Fn(&GameBatch, &Tensor, &Message) -> Result<LossOutput>,
{
    fn loss(&self, batch: &GameBatch, receiver_output: &Tensor, message: &Message) -> Result<LossOutput> {
        self(batch, receiver_output, message)
    }
}

/// Plain values of a tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl From<&Tensor> for Array {
    fn from(t: &Tensor) -> Self {
        Array {
            shape: t.shape().to_vec(),
            values: t.to_vec(),
        }
    }
}

/// Everything one batch produced, detached from the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub sender_input: Array,
    /// Canonical symbols `[B x max_len]`; argmax-decoded for relaxed messages.
    pub symbols: Vec<usize>,
    pub max_len: usize,
    pub lengths: Vec<usize>,
    pub receiver_output: Array,
    pub loss: Vec<f64>,
    pub aux: BTreeMap<String, Vec<f64>>,
}

impl Interaction {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn message(&self, i: usize) -> &[usize] {
        &self.symbols[i * self.max_len..i * self.max_len + self.lengths[i]]
    }
}

pub struct Game {
    sender: Box<dyn Sender>,
    receiver: Box<dyn Receiver>,
    loss: Box<dyn GameLoss>,
    entropy_coeff: f64,
    baseline: RunningMeanBaseline,
}

impl Game {
    pub fn new(sender: Box<dyn Sender>, receiver: Box<dyn Receiver>, loss: Box<dyn GameLoss>) -> Result<Self> {
        if sender.kind() != receiver.kind() {
            return Err(Error::ChannelMismatch(format!(
                "{:?} sender paired with {:?} receiver",
                sender.kind(),
                receiver.kind()
            )));
        }
        if sender.vocab() != receiver.vocab() {
            return Err(Error::ChannelMismatch(format!(
                "sender vocabulary {:?} differs from receiver vocabulary {:?}",
                sender.vocab(),
                receiver.vocab()
            )));
        }
        Ok(Game {
            sender,
            receiver,
            loss,
            entropy_coeff: 0.0,
            baseline: RunningMeanBaseline::default(),
        })
    }

    /// Weight of the bonus on the Sender's mean per-step entropy (both modes).
    pub fn with_entropy_coeff(mut self, coeff: f64) -> Self {
        self.entropy_coeff = coeff;
        self
    }

    pub fn entropy_coeff(&self) -> f64 {
        self.entropy_coeff
    }

    pub fn mode(&self) -> ChannelMode {
        self.sender.mode()
    }

    pub fn kind(&self) -> MessageKind {
        self.sender.kind()
    }

    pub fn sender(&self) -> &dyn Sender {
        self.sender.as_ref()
    }

    pub fn receiver(&self) -> &dyn Receiver {
        self.receiver.as_ref()
    }

    pub fn baseline(&self) -> RunningMeanBaseline {
        self.baseline
    }

    pub fn set_baseline(&mut self, baseline: RunningMeanBaseline) {
        self.baseline = baseline;
    }

    /// Training step: samples a message and returns the objective to
    /// minimize. Updates the REINFORCE baseline.
    pub fn forward(&mut self, batch: &GameBatch, rng: &mut Rng) -> Result<(Tensor, Interaction)> {
        let message = self.sender.send(&batch.sender_input, Decoding::Sample(rng))?;
        self.objective(batch, message)
    }

    /// As [`forward`](Self::forward) with the Sender's symbols fixed
    /// (REINFORCE only).
    pub fn forward_forced(&mut self, batch: &GameBatch, symbols: &[usize]) -> Result<(Tensor, Interaction)> {
        if !self.mode().is_reinforce() {
            return Err(Error::invalid("forced messages are only scored under REINFORCE"));
        }
        let message = self.sender.score(&batch.sender_input, symbols)?;
        self.objective(batch, Message::Discrete(message))
    }

    /// Greedy decoding without gradients; touches no state.
    pub fn evaluate_batch(&self, batch: &GameBatch) -> Result<Interaction> {
        tensor::no_grad(|| {
            let message = self.sender.send(&batch.sender_input, Decoding::Greedy)?;
            let out = self.receiver.receive(&message, batch.receiver_input.as_ref())?;
            let loss = self.loss_of(batch, &out.output, &message)?;
            Ok(interaction(batch, &message, &out.output, &loss))
        })
    }

    fn loss_of(&self, batch: &GameBatch, output: &Tensor, message: &Message) -> Result<LossOutput> {
        let loss = self.loss.loss(batch, output, message)?;
        if loss.per_sample.shape() != [batch.len()] {
            return Err(Error::BadShape {
                op: "game loss",
                expected: format!("[{}]", batch.len()),
                got: loss.per_sample.shape().to_vec(),
            });
        }
        if let Some((k, _)) = loss.aux.iter().find(|(_, v)| v.len() != batch.len()) {
            return Err(Error::invalid(format!("auxiliary metric {k} is not per-sample")));
        }
        Ok(loss)
    }

    fn objective(&mut self, batch: &GameBatch, message: Message) -> Result<(Tensor, Interaction)> {
        let out = self.receiver.receive(&message, batch.receiver_input.as_ref())?;
        let loss = self.loss_of(batch, &out.output, &message)?;
        let objective = match (self.mode(), &message) {
            (ChannelMode::Gs { .. }, message) => {
                let objective = loss.per_sample.mean_all()?;
                match message {
                    Message::Relaxed(RelaxedMessage { entropy: Some(h), .. }) if self.entropy_coeff != 0.0 => {
                        objective.sub(&h.mean_all()?.scale(self.entropy_coeff)?)?
                    }
                    _ => objective,
                }
            }
            (ChannelMode::Reinforce, Message::Discrete(m)) => {
                let mut log_prob = m.log_prob.clone();
                let mut entropy = m.entropy.clone();
                if let Some(lp) = &out.log_prob {
                    log_prob = log_prob.add(lp)?;
                }
                if let Some(h) = &out.entropy {
                    entropy = entropy.add(h)?;
                }
                let surrogate = reinforce_surrogate(&loss.per_sample, &log_prob, &mut self.baseline)?;
                if self.entropy_coeff != 0.0 {
                    surrogate.sub(&entropy.mean_all()?.scale(self.entropy_coeff)?)?
                } else {
                    surrogate
                }
            }
            (ChannelMode::Reinforce, Message::Relaxed(_)) => {
                return Err(Error::ChannelMismatch("relaxed message under REINFORCE".into()));
            }
        };
        let record = interaction(batch, &message, &out.output, &loss);
        Ok((objective, record))
    }
}

fn interaction(batch: &GameBatch, message: &Message, output: &Tensor, loss: &LossOutput) -> Interaction {
    Interaction {
        sender_input: Array::from(&batch.sender_input),
        symbols: message.symbols(),
        max_len: message.max_len(),
        lengths: message.lengths().to_vec(),
        receiver_output: Array::from(output),
        loss: loss.per_sample.to_vec(),
        aux: loss.aux.clone(),
    }
}

impl Module for Game {
    fn parameters(&self) -> NamedParams {
        let mut out = prefixed("sender", self.sender.parameters());
        out.extend(prefixed("receiver", self.receiver.parameters()));
        out
    }
}

#[cfg(test)]
mod tests;

//! The discrete channel between Sender and Receiver.
//!
//! Two optimization routes are supported. Under Gumbel-Softmax (GS) the
//! Sender emits relaxed symbols
//! `y_i = exp((log p_i + g_i)/τ) / Σ_j exp((log p_j + g_j)/τ)` with
//! `g_i ~ Gumbel(0, 1)`, and the whole game is trained by backpropagation.
//! Under REINFORCE the Sender samples discrete symbols and is trained through
//! the score-function surrogate built in [`reinforce_surrogate`]; a
//! deterministic Receiver still receives exact gradients (hybrid estimation).
//!
//! Messages are either one symbol or a sequence of up to `max_len` symbols
//! ended by [`EOS`]. Everything after the first `EOS` is ignored by every
//! consumer.

mod message;
mod reinforce;
mod sampling;
mod spec;
mod wrappers;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use message::{canonicalize, message_lengths, DiscreteMessage, Message, RelaxedMessage};
pub use reinforce::{reinforce_surrogate, reinforce_surrogate_with, RunningMeanBaseline};
pub use spec::ChannelSpec;
pub use sampling::{categorical_sample, entropy_from_logits, gs_relax, gs_sample, sample_gumbel, sample_index};
pub use wrappers::{
    Decoding, Receiver, ReceiverCore, ReceiverOutput, Sender, SenderCore, SequenceReceiver, SequenceSender,
    SymbolReceiver, SymbolSender,
};

/// The end-of-sequence symbol.
pub const EOS: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub size: usize,
    pub max_len: usize,
}

impl VocabSpec {
    pub fn new(size: usize, max_len: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::invalid(format!("vocabulary size must be at least 2, got {size}")));
        }
        if max_len < 1 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        Ok(VocabSpec { size, max_len })
    }

    pub fn eos(&self) -> usize {
        EOS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelMode {
    /// Relaxed symbols at a fixed temperature; optionally straight-through
    /// (hard one-hot forward, relaxed backward).
    Gs { temperature: f64, straight_through: bool },
    Reinforce,
}

impl ChannelMode {
    pub fn gs(temperature: f64) -> Self {
        ChannelMode::Gs {
            temperature,
            straight_through: false,
        }
    }

    pub fn is_reinforce(&self) -> bool {
        matches!(self, ChannelMode::Reinforce)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Symbol,
    Sequence,
}

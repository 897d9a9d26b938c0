use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::CellKind;
use crate::rng::Rng;

use super::{
    ChannelMode, MessageKind, Receiver, ReceiverCore, Sender, SenderCore, SequenceReceiver, SequenceSender,
    SymbolReceiver, SymbolSender, VocabSpec,
};

/// Everything needed to wrap a pair of cores for one of the four channel
/// variants (single symbol or sequence, GS or REINFORCE).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: MessageKind,
    pub mode: ChannelMode,
    pub vocab_size: usize,
    /// Ignored for single-symbol messages.
    pub max_len: usize,
    pub cell: CellKind,
    pub embed_dim: usize,
    pub sender_hidden: usize,
    pub receiver_hidden: usize,
}

impl ChannelSpec {
    pub fn symbol(mode: ChannelMode, vocab_size: usize, embed_dim: usize) -> Self {
        ChannelSpec {
            kind: MessageKind::Symbol,
            mode,
            vocab_size,
            max_len: 1,
            cell: CellKind::Gru,
            embed_dim,
            sender_hidden: embed_dim,
            receiver_hidden: embed_dim,
        }
    }

    pub fn sequence(mode: ChannelMode, vocab: VocabSpec, cell: CellKind, embed_dim: usize, hidden: usize) -> Self {
        ChannelSpec {
            kind: MessageKind::Sequence,
            mode,
            vocab_size: vocab.size,
            max_len: vocab.max_len,
            cell,
            embed_dim,
            sender_hidden: hidden,
            receiver_hidden: hidden,
        }
    }

    pub fn vocab(&self) -> Result<VocabSpec> {
        match self.kind {
            MessageKind::Symbol => VocabSpec::new(self.vocab_size, 1),
            MessageKind::Sequence => VocabSpec::new(self.vocab_size, self.max_len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vocab()?;
        if self.embed_dim == 0 || self.sender_hidden == 0 || self.receiver_hidden == 0 {
            return Err(Error::invalid("embedding and hidden sizes must be positive"));
        }
        if let ChannelMode::Gs { temperature, .. } = self.mode {
            if !(temperature > 0.0) {
                return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
            }
        }
        Ok(())
    }

    /// Width the Sender core must output.
    pub fn sender_core_output(&self) -> usize {
        match self.kind {
            MessageKind::Symbol => self.vocab_size,
            MessageKind::Sequence => self.sender_hidden,
        }
    }

    /// Width of the message representation the Receiver core gets.
    pub fn receiver_core_input(&self) -> usize {
        match self.kind {
            MessageKind::Symbol => self.embed_dim,
            MessageKind::Sequence => self.receiver_hidden,
        }
    }

    pub fn sender(&self, core: Box<dyn SenderCore>, rng: &mut Rng) -> Result<Box<dyn Sender>> {
        self.validate()?;
        Ok(match self.kind {
            MessageKind::Symbol => Box::new(SymbolSender::new(core, self.vocab_size, self.mode)?),
            MessageKind::Sequence => Box::new(SequenceSender::new(
                core,
                self.cell,
                self.embed_dim,
                self.sender_hidden,
                self.vocab()?,
                self.mode,
                rng,
            )?),
        })
    }

    pub fn receiver(&self, core: Box<dyn ReceiverCore>, rng: &mut Rng) -> Result<Box<dyn Receiver>> {
        self.validate()?;
        Ok(match self.kind {
            MessageKind::Symbol => Box::new(SymbolReceiver::new(core, self.vocab_size, self.embed_dim, rng)?),
            MessageKind::Sequence => Box::new(SequenceReceiver::new(
                core,
                self.cell,
                self.embed_dim,
                self.receiver_hidden,
                self.vocab()?,
                rng,
            )?),
        })
    }
}

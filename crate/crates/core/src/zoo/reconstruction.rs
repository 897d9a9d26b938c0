use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, ReceiverCore};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::nn::{Activation, Mlp, Module, NamedParams};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{mlp_core, BinaryCrossEntropy};

/// Autoencoding through the channel: the Sender encodes a vector in `[0,1]^d`,
/// the Receiver decodes the message back to `d` sigmoid outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSpec {
    pub dim: usize,
    pub sender_layers: Vec<usize>,
    pub receiver_layers: Vec<usize>,
    pub activation: Activation,
    pub channel: ChannelSpec,
    /// One-hot groups in the targets, for the accuracy metrics.
    pub blocks: usize,
}

/// MLP followed by a sigmoid, so outputs lie in `[0, 1]`.
pub struct SigmoidDecoder(pub Mlp);

impl Module for SigmoidDecoder {
    fn parameters(&self) -> NamedParams {
        self.0.parameters()
    }
}

impl ReceiverCore for SigmoidDecoder {
    fn forward(&self, message: &Tensor, receiver_input: Option<&Tensor>) -> Result<Tensor> {
        if receiver_input.is_some() {
            return Err(Error::invalid("the reconstruction receiver takes no receiver input"));
        }
        self.0.forward(message)?.sigmoid()
    }
}

pub fn build_reconstruction_game(spec: &ReconstructionSpec, rng: &mut Rng) -> Result<Game> {
    if spec.dim == 0 {
        return Err(Error::invalid("reconstruction dimension must be positive"));
    }
    if spec.blocks == 0 || spec.dim % spec.blocks != 0 {
        return Err(Error::invalid(format!("{} dimensions do not split into {} blocks", spec.dim, spec.blocks)));
    }
    let ch = &spec.channel;
    let encoder = mlp_core(spec.dim, &spec.sender_layers, ch.sender_core_output(), spec.activation, rng)?;
    let sender = ch.sender(Box::new(encoder), rng)?;
    let decoder = mlp_core(ch.receiver_core_input(), &spec.receiver_layers, spec.dim, spec.activation, rng)?;
    let receiver = ch.receiver(Box::new(SigmoidDecoder(decoder)), rng)?;
    Game::new(sender, receiver, Box::new(BinaryCrossEntropy { blocks: spec.blocks }))
}

//! Reference games: reconstruction (autoencoding), discrimination
//! (Sender describes a target, Receiver picks it among distractors) and a
//! game driven entirely by numeric tables on disk.

mod discrimination;
mod file_game;
mod reconstruction;

use std::collections::BTreeMap;

use crate::channel::Message;
use crate::error::{Error, Result};
use crate::game::{GameBatch, GameLoss, Labels, LossOutput};
use crate::nn::{Activation, Mlp};
use crate::rng::Rng;
use crate::tensor::{argmax, Tensor};

pub use discrimination::{build_discrimination_game, DiscriminationDataset, DiscriminationReceiverCore, DiscriminationSpec};
pub use file_game::{build_file_game, read_table, write_predictions, FileGame, FileGameSpec, FileTask};
pub use reconstruction::{build_reconstruction_game, ReconstructionSpec, SigmoidDecoder};

/// Smallest probability fed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `[in, hidden.., out]` MLP.
pub fn mlp_core(input: usize, hidden: &[usize], output: usize, activation: Activation, rng: &mut Rng) -> Result<Mlp> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    Mlp::new(&sizes, activation, rng)
}

/// Cross-entropy of row-wise scores against class labels, with per-sample
/// `accuracy` (argmax, lowest index on ties).
pub fn cross_entropy(batch: &GameBatch, scores: &Tensor, _message: &Message) -> Result<LossOutput> {
    let Labels::Classes(classes) = &batch.labels else {
        return Err(Error::invalid("cross-entropy needs class labels"));
    };
    if scores.rank() != 2 {
        return Err(Error::BadShape {
            op: "cross_entropy",
            expected: "[batch x classes]".into(),
            got: scores.shape().to_vec(),
        });
    }
    let per_sample = scores.log_softmax(1)?.pick(classes)?.neg()?;
    let width = scores.shape()[1];
    let accuracy = scores
        .values()
        .chunks(width)
        .zip(classes)
        .map(|(row, &c)| if argmax(row) == c { 1.0 } else { 0.0 })
        .collect();
    Ok(LossOutput {
        per_sample,
        aux: BTreeMap::from([("accuracy".into(), accuracy)]),
    })
}

/// Mean per-dimension binary cross-entropy between outputs in `[0, 1]` and
/// targets in `[0, 1]`, with outputs clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
///
/// Targets are viewed as `blocks` equal one-hot groups for the auxiliary
/// metrics: `accuracy` is the fraction of groups whose argmax matches and
/// `exact_match` is 1 when all of them do.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryCrossEntropy {
    pub blocks: usize,
}

impl GameLoss for BinaryCrossEntropy {
    fn loss(&self, batch: &GameBatch, output: &Tensor, _message: &Message) -> Result<LossOutput> {
        let Labels::Targets(target) = &batch.labels else {
            return Err(Error::invalid("binary cross-entropy needs target rows"));
        };
        if output.shape() != target.shape() || output.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "binary_cross_entropy",
                lhs: output.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let dim = output.shape()[1];
        if self.blocks == 0 || dim % self.blocks != 0 {
            return Err(Error::invalid(format!("{dim} outputs do not split into {} blocks", self.blocks)));
        }
        let p = output.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)?;
        let per_sample = target
            .mul(&p.ln()?)?
            .add(&target.one_minus()?.mul(&p.one_minus()?.ln()?)?)?
            .mean_axis(1)?
            .neg()?;
        let width = dim / self.blocks;
        let (out, tgt) = (output.values(), target.values());
        let mut accuracy = Vec::new();
        let mut exact = Vec::new();
        for (o, t) in out.chunks(dim).zip(tgt.chunks(dim)) {
            let hits = o
                .chunks(width)
                .zip(t.chunks(width))
                .filter(|(a, b)| argmax(a) == argmax(b))
                .count();
            accuracy.push(hits as f64 / self.blocks as f64);
            exact.push(if hits == self.blocks { 1.0 } else { 0.0 });
        }
        Ok(LossOutput {
            per_sample,
            aux: BTreeMap::from([("accuracy".into(), accuracy), ("exact_match".into(), exact)]),
        })
    }
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, ReceiverCore};
use crate::data::GameDataset;
use crate::error::{Error, Result};
use crate::game::{Game, GameBatch, Labels};
use crate::nn::{prefixed, Activation, Linear, Module, NamedParams};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

use super::{cross_entropy, mlp_core};

/// Sender sees a target item; Receiver sees the message and `n_candidates`
/// shuffled items (the target and distinct distractors) and must point at
/// the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationSpec {
    pub item_dim: usize,
    pub n_candidates: usize,
    pub sender_layers: Vec<usize>,
    /// Width of the space in which message and candidates are compared.
    pub score_dim: usize,
    pub activation: Activation,
    pub channel: ChannelSpec,
}

/// Scores candidate `k` as `(W_c c_k) · (W_m m)`, where `m` is the message
/// representation. Expects the Receiver input `[B x K x item_dim]` and
/// returns scores `[B x K]`.
pub struct DiscriminationReceiverCore {
    message: Linear,
    candidate: Linear,
}

impl DiscriminationReceiverCore {
    pub fn new(message_dim: usize, item_dim: usize, score_dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(DiscriminationReceiverCore {
            message: Linear::new(message_dim, score_dim, rng)?,
            candidate: Linear::new(item_dim, score_dim, rng)?,
        })
    }
}

impl Module for DiscriminationReceiverCore {
    fn parameters(&self) -> NamedParams {
        let mut out = prefixed("message", self.message.parameters());
        out.extend(prefixed("candidate", self.candidate.parameters()));
        out
    }
}

impl ReceiverCore for DiscriminationReceiverCore {
    fn forward(&self, message: &Tensor, receiver_input: Option<&Tensor>) -> Result<Tensor> {
        let candidates = receiver_input.ok_or_else(|| Error::invalid("discrimination needs candidates"))?;
        if candidates.rank() != 3 || candidates.shape()[0] != message.shape()[0] {
            return Err(Error::BadShape {
                op: "discrimination receiver",
                expected: format!("[{} x K x item_dim]", message.shape()[0]),
                got: candidates.shape().to_vec(),
            });
        }
        let (b, k, d) = (candidates.shape()[0], candidates.shape()[1], candidates.shape()[2]);
        let c = self.candidate.forward(&candidates.reshape(&[b * k, d])?)?;
        let m = self.message.forward(message)?;
        let repeat: Vec<usize> = (0..b).flat_map(|i| std::iter::repeat(i).take(k)).collect();
        c.mul(&m.index_rows(&repeat)?)?.sum_axis(1)?.reshape(&[b, k])
    }
}

pub fn build_discrimination_game(spec: &DiscriminationSpec, rng: &mut Rng) -> Result<Game> {
    if spec.n_candidates < 2 {
        return Err(Error::invalid(format!(
            "discrimination needs at least 2 candidates, got {}",
            spec.n_candidates
        )));
    }
    if spec.item_dim == 0 || spec.score_dim == 0 {
        return Err(Error::invalid("item and score dimensions must be positive"));
    }
    let ch = &spec.channel;
    let encoder = mlp_core(spec.item_dim, &spec.sender_layers, ch.sender_core_output(), spec.activation, rng)?;
    let sender = ch.sender(Box::new(encoder), rng)?;
    let core = DiscriminationReceiverCore::new(ch.receiver_core_input(), spec.item_dim, spec.score_dim, rng)?;
    let receiver = ch.receiver(Box::new(core), rng)?;
    Game::new(sender, receiver, Box::new(cross_entropy))
}

/// Instances built around each item as target. Distractors are drawn
/// uniformly without replacement from the other items, and the candidate
/// order is shuffled, freshly for every `(epoch, item)`. A frozen dataset uses
/// one fixed draw regardless of the epoch (for validation).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminationDataset {
    dim: usize,
    items: Vec<f64>,
    n_candidates: usize,
    seed: u64,
    frozen: Option<u64>,
}

impl DiscriminationDataset {
    pub fn new(dim: usize, items: Vec<f64>, n_candidates: usize, seed: u64) -> Result<Self> {
        if dim == 0 || items.len() % dim != 0 {
            return Err(Error::invalid("items do not form whole rows"));
        }
        if n_candidates < 2 {
            return Err(Error::invalid("discrimination needs at least 2 candidates"));
        }
        let n = items.len() / dim;
        if n < n_candidates {
            return Err(Error::invalid(format!("{n} items cannot supply {n_candidates} distinct candidates")));
        }
        Ok(DiscriminationDataset {
            dim,
            items,
            n_candidates,
            seed,
            frozen: None,
        })
    }

    /// The same distractors and order in every epoch.
    pub fn frozen(mut self, draw: u64) -> Self {
        self.frozen = Some(draw);
        self
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    /// Candidate item indices for one instance, and the target position.
    pub fn instance(&self, target: usize, epoch: u64) -> (Vec<usize>, usize) {
        let n = self.len();
        let draw = self.frozen.unwrap_or(epoch);
        let mut r = rng::stream(self.seed, rng::DISTRACTORS, draw.wrapping_mul(n as u64).wrapping_add(target as u64));
        let mut candidates: Vec<usize> = rand::seq::index::sample(&mut r, n - 1, self.n_candidates - 1)
            .into_iter()
            .map(|j| if j < target { j } else { j + 1 })
            .collect();
        candidates.push(target);
        candidates.shuffle(&mut r);
        let pos = candidates.iter().position(|&c| c == target).expect("target is a candidate");
        (candidates, pos)
    }
}

impl GameDataset for DiscriminationDataset {
    fn len(&self) -> usize {
        self.items.len() / self.dim
    }

    fn batch(&self, indices: &[usize], epoch: u64) -> Result<GameBatch> {
        let d = self.dim;
        let row = |i: usize| &self.items[i * d..(i + 1) * d];
        let mut targets = Vec::with_capacity(indices.len() * d);
        let mut candidates = Vec::with_capacity(indices.len() * self.n_candidates * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &t in indices {
            if t >= self.len() {
                return Err(Error::IndexOutOfRange { index: t, size: self.len() });
            }
            targets.extend_from_slice(row(t));
            let (cands, pos) = self.instance(t, epoch);
            for c in cands {
                candidates.extend_from_slice(row(c));
            }
            labels.push(pos);
        }
        let b = indices.len();
        GameBatch::new(
            Tensor::new(targets, &[b, d])?,
            Some(Tensor::new(candidates, &[b, self.n_candidates, d])?),
            Labels::Classes(labels),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelMode, VocabSpec};
    use crate::data::AttributeValueDataset;
    use crate::game::evaluate;
    use crate::nn::CellKind;

    fn items() -> AttributeValueDataset {
        AttributeValueDataset::generate(3, 4, None, &mut rng::stream(0, rng::DATA, 0)).unwrap()
    }

    #[test]
    fn instances_hold_distinct_candidates_with_one_target() {
        let it = items();
        let d = DiscriminationDataset::new(it.dim(), it.encoded(), 5, 3).unwrap();
        let mut positions = [0usize; 5];
        for t in 0..d.len() {
            let (c, pos) = d.instance(t, 1);
            assert_eq!(c.len(), 5);
            assert_eq!(c[pos], t);
            let mut s = c.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 5);
            positions[pos] += 1;
        }
        assert!(positions.iter().all(|&p| p > 0));
        assert_ne!(d.instance(0, 1), d.instance(0, 2));
        let frozen = d.clone().frozen(0);
        assert_eq!(frozen.instance(0, 1), frozen.instance(0, 2));
    }

    #[test]
    fn too_few_items_or_candidates() {
        assert!(DiscriminationDataset::new(2, vec![0.0; 4], 3, 0).is_err());
        assert!(DiscriminationDataset::new(2, vec![0.0; 8], 1, 0).is_err());
        let spec = DiscriminationSpec {
            item_dim: 4,
            n_candidates: 1,
            sender_layers: vec![],
            score_dim: 4,
            activation: Activation::Tanh,
            channel: ChannelSpec::symbol(ChannelMode::Reinforce, 4, 4),
        };
        assert!(build_discrimination_game(&spec, &mut rng::stream(0, rng::PARAMS, 0)).is_err());
    }

    #[test]
    fn untrained_agents_are_at_chance() {
        let it = AttributeValueDataset::generate(4, 6, Some(1200), &mut rng::stream(1, rng::DATA, 0)).unwrap();
        let vocab = VocabSpec::new(10, 2).unwrap();
        for (k, seed) in [(2, 1), (5, 2)] {
            let data = DiscriminationDataset::new(it.dim(), it.encoded(), k, seed).unwrap();
            let spec = DiscriminationSpec {
                item_dim: it.dim(),
                n_candidates: k,
                sender_layers: vec![],
                score_dim: 16,
                activation: Activation::Tanh,
                channel: ChannelSpec::sequence(ChannelMode::gs(1.0), vocab, CellKind::Lstm, 10, 20),
            };
            let game = build_discrimination_game(&spec, &mut rng::stream(seed, rng::PARAMS, 0)).unwrap();
            let acc = evaluate(&game, &data, 100, 0).unwrap().aux["accuracy"];
            let p = 1.0 / k as f64;
            let sigma = (p * (1.0 - p) / data.len() as f64).sqrt();
            assert!((acc - p).abs() < 3.0 * sigma, "K={k}: accuracy {acc}");
        }
    }
}

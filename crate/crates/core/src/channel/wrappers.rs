//! Wrappers turning user-supplied cores into channel agents.
//!
//! A Sender core maps the Sender input to a vector: symbol scores `[B x V]`
//! for single-symbol messages, or the initial hidden state of the Sender cell
//! for sequences. A Receiver core maps the message embedding (single symbol)
//! or the Receiver cell's hidden state at the message end (sequences), plus
//! the optional Receiver input, to the game output. The same cores run under
//! all four wrappers.

use crate::error::{Error, Result};
use crate::nn::{prefixed, CellKind, Embedding, Linear, Mlp, Module, NamedParams, RnnCell};
use crate::rng::Rng;
use crate::tensor::{argmax, Tensor};

use super::sampling::{gs_sample, sample_index};
use super::{ChannelMode, DiscreteMessage, Message, MessageKind, RelaxedMessage, VocabSpec};

pub trait SenderCore: Module {
    fn forward(&self, input: &Tensor) -> Result<Tensor>;
}

pub trait ReceiverCore: Module {
    fn forward(&self, message: &Tensor, receiver_input: Option<&Tensor>) -> Result<Tensor>;
}

impl SenderCore for Mlp {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Mlp::forward(self, input)
    }
}

impl SenderCore for Linear {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Linear::forward(self, input)
    }
}

impl ReceiverCore for Mlp {
    fn forward(&self, message: &Tensor, receiver_input: Option<&Tensor>) -> Result<Tensor> {
        if receiver_input.is_some() {
            return Err(Error::invalid("an MLP receiver core takes no receiver input"));
        }
        Mlp::forward(self, message)
    }
}

impl ReceiverCore for Linear {
    fn forward(&self, message: &Tensor, receiver_input: Option<&Tensor>) -> Result<Tensor> {
        if receiver_input.is_some() {
            return Err(Error::invalid("a linear receiver core takes no receiver input"));
        }
        Linear::forward(self, message)
    }
}

/// How a Sender picks symbols.
pub enum Decoding<'a> {
    /// Relaxed samples under GS, categorical samples under REINFORCE.
    Sample(&'a mut Rng),
    /// Row-wise argmax, as a discrete message. Used for evaluation.
    Greedy,
}

pub trait Sender: Module {
    fn vocab(&self) -> VocabSpec;
    fn mode(&self) -> ChannelMode;
    fn kind(&self) -> MessageKind;
    fn send(&self, input: &Tensor, decoding: Decoding<'_>) -> Result<Message>;
    /// Log-probabilities of given symbols (`[B x max_len]`, flattened) under
    /// the Sender's policy; symbols after a row's eos are ignored.
    fn score(&self, input: &Tensor, symbols: &[usize]) -> Result<DiscreteMessage>;
}

pub struct ReceiverOutput {
    pub output: Tensor,
    /// Log-probability `[B]` of a stochastic Receiver's sampled output.
    pub log_prob: Option<Tensor>,
    pub entropy: Option<Tensor>,
}

impl ReceiverOutput {
    pub fn deterministic(output: Tensor) -> Self {
        ReceiverOutput {
            output,
            log_prob: None,
            entropy: None,
        }
    }
}

pub trait Receiver: Module {
    fn vocab(&self) -> VocabSpec;
    fn kind(&self) -> MessageKind;
    fn receive(&self, message: &Message, receiver_input: Option<&Tensor>) -> Result<ReceiverOutput>;
}

enum Source<'a> {
    Sample(&'a mut Rng),
    Greedy,
    Forced(&'a [usize]),
}

impl Source<'_> {
    fn pick(&mut self, log_p: &Tensor, t: usize, max_len: usize) -> Vec<usize> {
        let v = log_p.shape()[1];
        let values = log_p.values();
        match self {
            Source::Sample(rng) => values
                .chunks(v)
                .map(|row| {
                    let probs: Vec<f64> = row.iter().map(|x| x.exp()).collect();
                    sample_index(&probs, rng)
                })
                .collect(),
            Source::Greedy => values.chunks(v).map(argmax).collect(),
            Source::Forced(symbols) => symbols.chunks(max_len).map(|row| row[t]).collect(),
        }
    }
}

fn row_entropy(log_p: &Tensor) -> Result<Tensor> {
    log_p.exp()?.mul(log_p)?.sum_axis(1)?.neg()
}

fn check_scores(what: &'static str, scores: &Tensor, batch: usize, width: usize) -> Result<()> {
    if scores.shape() != [batch, width] {
        return Err(Error::ChannelMismatch(format!(
            "{what} produced shape {:?}, expected [{batch}, {width}]",
            scores.shape()
        )));
    }
    Ok(())
}

fn check_forced(symbols: &[usize], batch: usize, vocab: VocabSpec) -> Result<()> {
    if symbols.len() != batch * vocab.max_len {
        return Err(Error::ChannelMismatch(format!(
            "expected {batch} x {} symbols, got {}",
            vocab.max_len,
            symbols.len()
        )));
    }
    if let Some(&s) = symbols.iter().find(|&&s| s >= vocab.size) {
        return Err(Error::ChannelMismatch(format!("symbol {s} outside vocabulary of size {}", vocab.size)));
    }
    Ok(())
}

fn batch_of(input: &Tensor) -> Result<usize> {
    input
        .shape()
        .first()
        .copied()
        .ok_or_else(|| Error::invalid("sender input needs a batch dimension"))
}

/// Single-symbol Sender: the core's output is read as symbol scores.
pub struct SymbolSender {
    core: Box<dyn SenderCore>,
    vocab: VocabSpec,
    mode: ChannelMode,
}

impl SymbolSender {
    pub fn new(core: Box<dyn SenderCore>, vocab_size: usize, mode: ChannelMode) -> Result<Self> {
        if let ChannelMode::Gs { temperature, .. } = mode {
            if !(temperature > 0.0) {
                return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
            }
        }
        Ok(SymbolSender {
            core,
            vocab: VocabSpec::new(vocab_size, 1)?,
            mode,
        })
    }

    pub fn gs(core: Box<dyn SenderCore>, vocab_size: usize, temperature: f64) -> Result<Self> {
        Self::new(core, vocab_size, ChannelMode::gs(temperature))
    }

    pub fn reinforce(core: Box<dyn SenderCore>, vocab_size: usize) -> Result<Self> {
        Self::new(core, vocab_size, ChannelMode::Reinforce)
    }

    fn logits(&self, input: &Tensor) -> Result<Tensor> {
        let logits = self.core.forward(input)?;
        check_scores("sender core", &logits, batch_of(input)?, self.vocab.size)?;
        Ok(logits)
    }

    fn discrete(&self, logits: &Tensor, mut source: Source<'_>) -> Result<DiscreteMessage> {
        let log_p = logits.log_softmax(1)?;
        let symbols = source.pick(&log_p, 0, 1);
        let log_prob = log_p.pick(&symbols)?;
        let entropy = row_entropy(&log_p)?;
        DiscreteMessage::new(symbols, 1, log_prob, entropy)
    }
}

impl Module for SymbolSender {
    fn parameters(&self) -> NamedParams {
        prefixed("core", self.core.parameters())
    }
}

impl Sender for SymbolSender {
    fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    fn mode(&self) -> ChannelMode {
        self.mode
    }

    fn kind(&self) -> MessageKind {
        MessageKind::Symbol
    }

    fn send(&self, input: &Tensor, decoding: Decoding<'_>) -> Result<Message> {
        let logits = self.logits(input)?;
        match (self.mode, decoding) {
            (
                ChannelMode::Gs {
                    temperature,
                    straight_through,
                },
                Decoding::Sample(rng),
            ) => {
                let mut y = gs_sample(&logits, temperature, rng)?;
                if straight_through {
                    y = y.straight_through()?;
                }
                let entropy = row_entropy(&logits.log_softmax(1)?)?;
                Ok(Message::Relaxed(RelaxedMessage::new(vec![y], temperature)?.with_entropy(entropy)?))
            }
            (ChannelMode::Reinforce, Decoding::Sample(rng)) => {
                Ok(Message::Discrete(self.discrete(&logits, Source::Sample(rng))?))
            }
            (_, Decoding::Greedy) => Ok(Message::Discrete(self.discrete(&logits, Source::Greedy)?)),
        }
    }

    fn score(&self, input: &Tensor, symbols: &[usize]) -> Result<DiscreteMessage> {
        let logits = self.logits(input)?;
        check_forced(symbols, logits.shape()[0], self.vocab)?;
        self.discrete(&logits, Source::Forced(symbols))
    }
}

/// Variable-length Sender: the core's output initializes a recurrent cell
/// that is unrolled for up to `max_len` steps, each step emitting one symbol
/// whose embedding is the next cell input.
pub struct SequenceSender {
    core: Box<dyn SenderCore>,
    cell: RnnCell,
    embedding: Embedding,
    sos: Tensor,
    head: Linear,
    vocab: VocabSpec,
    mode: ChannelMode,
}

impl SequenceSender {
    pub fn new(
        core: Box<dyn SenderCore>,
        cell: CellKind,
        embed_dim: usize,
        hidden: usize,
        vocab: VocabSpec,
        mode: ChannelMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        if let ChannelMode::Gs { temperature, .. } = mode {
            if !(temperature > 0.0) {
                return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
            }
        }
        let cell = RnnCell::new(cell, embed_dim, hidden, rng)?;
        let embedding = Embedding::new(vocab.size, embed_dim, rng)?;
        let sos = crate::nn::uniform_weight(1, embed_dim, rng)?;
        let head = Linear::new(hidden, vocab.size, rng)?;
        Ok(SequenceSender {
            core,
            cell,
            embedding,
            sos,
            head,
            vocab,
            mode,
        })
    }

    fn initial(&self, input: &Tensor) -> Result<(crate::nn::CellState, Tensor)> {
        let batch = batch_of(input)?;
        let h0 = self.core.forward(input)?;
        check_scores("sender core", &h0, batch, self.cell.hidden_size())?;
        let state = self.cell.state_from(h0)?;
        let x = self.sos.index_rows(&vec![0; batch])?;
        Ok((state, x))
    }

    fn unroll_discrete(&self, input: &Tensor, mut source: Source<'_>) -> Result<DiscreteMessage> {
        let (mut state, mut x) = self.initial(input)?;
        let batch = x.shape()[0];
        let max_len = self.vocab.max_len;
        let mut symbols = vec![0; batch * max_len];
        let mut done = vec![false; batch];
        let mut lengths = vec![max_len; batch];
        let mut log_prob = Tensor::zeros(&[batch]);
        let mut entropy = Tensor::zeros(&[batch]);
        for t in 0..max_len {
            state = self.cell.step(&x, &state)?;
            let log_p = self.head.forward(&state.h)?.log_softmax(1)?;
            let mut step = source.pick(&log_p, t, max_len);
            let live: Vec<f64> = done.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect();
            for b in 0..batch {
                if done[b] {
                    step[b] = super::EOS;
                } else if step[b] == super::EOS {
                    done[b] = true;
                    lengths[b] = t + 1;
                }
                symbols[b * max_len + t] = step[b];
            }
            let live = Tensor::new(live, &[batch])?;
            log_prob = log_prob.add(&log_p.pick(&step)?.mul(&live)?)?;
            entropy = entropy.add(&row_entropy(&log_p)?.mul(&live)?)?;
            if done.iter().all(|&d| d) {
                break;
            }
            x = self.embedding.lookup(&step)?;
        }
        let lens = Tensor::new(lengths.iter().map(|&l| l as f64).collect(), &[batch])?;
        DiscreteMessage::new(symbols, max_len, log_prob, entropy.div(&lens)?)
    }

    fn unroll_relaxed(&self, input: &Tensor, temperature: f64, straight_through: bool, rng: &mut Rng) -> Result<RelaxedMessage> {
        let (mut state, mut x) = self.initial(input)?;
        let mut steps = Vec::with_capacity(self.vocab.max_len);
        let mut entropy = Tensor::zeros(&[x.shape()[0]]);
        for _ in 0..self.vocab.max_len {
            state = self.cell.step(&x, &state)?;
            let logits = self.head.forward(&state.h)?;
            entropy = entropy.add(&row_entropy(&logits.log_softmax(1)?)?)?;
            let mut y = gs_sample(&logits, temperature, rng)?;
            if straight_through {
                y = y.straight_through()?;
            }
            x = self.embedding.mix(&y)?;
            steps.push(y);
        }
        let entropy = entropy.scale(1.0 / self.vocab.max_len as f64)?;
        RelaxedMessage::new(steps, temperature)?.with_entropy(entropy)
    }
}

impl Module for SequenceSender {
    fn parameters(&self) -> NamedParams {
        let mut out = prefixed("core", self.core.parameters());
        out.extend(prefixed("cell", self.cell.parameters()));
        out.extend(prefixed("embedding", self.embedding.parameters()));
        out.push(("sos".into(), self.sos.clone()));
        out.extend(prefixed("head", self.head.parameters()));
        out
    }
}

impl Sender for SequenceSender {
    fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    fn mode(&self) -> ChannelMode {
        self.mode
    }

    fn kind(&self) -> MessageKind {
        MessageKind::Sequence
    }

    fn send(&self, input: &Tensor, decoding: Decoding<'_>) -> Result<Message> {
        match (self.mode, decoding) {
            (
                ChannelMode::Gs {
                    temperature,
                    straight_through,
                },
                Decoding::Sample(rng),
            ) => Ok(Message::Relaxed(self.unroll_relaxed(input, temperature, straight_through, rng)?)),
            (ChannelMode::Reinforce, Decoding::Sample(rng)) => {
                Ok(Message::Discrete(self.unroll_discrete(input, Source::Sample(rng))?))
            }
            (_, Decoding::Greedy) => Ok(Message::Discrete(self.unroll_discrete(input, Source::Greedy)?)),
        }
    }

    fn score(&self, input: &Tensor, symbols: &[usize]) -> Result<DiscreteMessage> {
        check_forced(symbols, batch_of(input)?, self.vocab)?;
        let canonical = super::canonicalize(symbols, self.vocab.max_len);
        self.unroll_discrete(input, Source::Forced(&canonical))
    }
}

fn check_message(message: &Message, vocab: VocabSpec) -> Result<()> {
    if message.max_len() > vocab.max_len {
        return Err(Error::ChannelMismatch(format!(
            "message of length {} exceeds max_len {}",
            message.max_len(),
            vocab.max_len
        )));
    }
    match message {
        Message::Discrete(m) => {
            if let Some(&s) = m.symbols().iter().find(|&&s| s >= vocab.size) {
                return Err(Error::ChannelMismatch(format!(
                    "symbol {s} outside vocabulary of size {}",
                    vocab.size
                )));
            }
        }
        Message::Relaxed(m) => {
            if m.vocab_size() != vocab.size {
                return Err(Error::ChannelMismatch(format!(
                    "relaxed symbols over {} values, vocabulary has {}",
                    m.vocab_size(),
                    vocab.size
                )));
            }
        }
    }
    Ok(())
}

fn embed_step(embedding: &Embedding, message: &Message, t: usize) -> Result<Tensor> {
    match message {
        Message::Discrete(m) => embedding.lookup(&m.column(t)),
        Message::Relaxed(m) => embedding.mix(&m.steps[t]),
    }
}

/// Single-symbol Receiver: embeds the symbol (or the mixture of embedding
/// rows for a relaxed symbol) and passes it to the core.
pub struct SymbolReceiver {
    core: Box<dyn ReceiverCore>,
    embedding: Embedding,
    vocab: VocabSpec,
}

impl SymbolReceiver {
    pub fn new(core: Box<dyn ReceiverCore>, vocab_size: usize, embed_dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(SymbolReceiver {
            core,
            embedding: Embedding::new(vocab_size, embed_dim, rng)?,
            vocab: VocabSpec::new(vocab_size, 1)?,
        })
    }
}

impl Module for SymbolReceiver {
    fn parameters(&self) -> NamedParams {
        let mut out = prefixed("embedding", self.embedding.parameters());
        out.extend(prefixed("core", self.core.parameters()));
        out
    }
}

impl Receiver for SymbolReceiver {
    fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    fn kind(&self) -> MessageKind {
        MessageKind::Symbol
    }

    fn receive(&self, message: &Message, receiver_input: Option<&Tensor>) -> Result<ReceiverOutput> {
        check_message(message, self.vocab)?;
        let emb = embed_step(&self.embedding, message, 0)?;
        Ok(ReceiverOutput::deterministic(self.core.forward(&emb, receiver_input)?))
    }
}

/// Variable-length Receiver: runs its own cell over the embedded symbols and
/// hands the hidden state at each sample's effective length to the core.
pub struct SequenceReceiver {
    core: Box<dyn ReceiverCore>,
    cell: RnnCell,
    embedding: Embedding,
    vocab: VocabSpec,
}

impl SequenceReceiver {
    pub fn new(
        core: Box<dyn ReceiverCore>,
        cell: CellKind,
        embed_dim: usize,
        hidden: usize,
        vocab: VocabSpec,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(SequenceReceiver {
            cell: RnnCell::new(cell, embed_dim, hidden, rng)?,
            embedding: Embedding::new(vocab.size, embed_dim, rng)?,
            core,
            vocab,
        })
    }

    /// Hidden state `[B x hidden]` at each sample's effective length.
    pub fn encode(&self, message: &Message) -> Result<Tensor> {
        check_message(message, self.vocab)?;
        let lengths = message.lengths();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut state = self.cell.zero_state(message.batch());
        let mut hidden = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = embed_step(&self.embedding, message, t)?;
            state = self.cell.step(&x, &state)?;
            hidden.push(state.h.clone());
        }
        let last: Vec<usize> = lengths.iter().map(|l| l - 1).collect();
        Tensor::select_rows(&hidden, &last)
    }
}

impl Module for SequenceReceiver {
    fn parameters(&self) -> NamedParams {
        let mut out = prefixed("cell", self.cell.parameters());
        out.extend(prefixed("embedding", self.embedding.parameters()));
        out.extend(prefixed("core", self.core.parameters()));
        out
    }
}

impl Receiver for SequenceReceiver {
    fn vocab(&self) -> VocabSpec {
        self.vocab
    }

    fn kind(&self) -> MessageKind {
        MessageKind::Sequence
    }

    fn receive(&self, message: &Message, receiver_input: Option<&Tensor>) -> Result<ReceiverOutput> {
        let h = self.encode(message)?;
        Ok(ReceiverOutput::deterministic(self.core.forward(&h, receiver_input)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng;
    use crate::tensor;

    fn seq_sender(mode: ChannelMode, seed: u64) -> SequenceSender {
        let mut r = rng::stream(seed, rng::PARAMS, 0);
        let core = Mlp::new(&[3, 6], Activation::Tanh, &mut r).unwrap();
        let vocab = VocabSpec::new(4, 3).unwrap();
        SequenceSender::new(Box::new(core), CellKind::Gru, 5, 6, vocab, mode, &mut r).unwrap()
    }

    fn seq_receiver(seed: u64) -> SequenceReceiver {
        let mut r = rng::stream(seed, rng::PARAMS, 1);
        let core = Mlp::new(&[6, 2], Activation::Tanh, &mut r).unwrap();
        let vocab = VocabSpec::new(4, 3).unwrap();
        SequenceReceiver::new(Box::new(core), CellKind::Lstm, 5, 6, vocab, &mut r).unwrap()
    }

    fn input() -> Tensor {
        Tensor::new(vec![0.5, -0.2, 0.1, 1.0, 0.3, -0.7], &[2, 3]).unwrap()
    }

    #[test]
    fn symbol_gs_rows_sum_to_one() {
        let mut r = rng::stream(0, rng::PARAMS, 0);
        let core = Linear::new(3, 5, &mut r).unwrap();
        let s = SymbolSender::gs(Box::new(core), 5, 1.0).unwrap();
        let Message::Relaxed(m) = s.send(&input(), Decoding::Sample(&mut r)).unwrap() else {
            panic!("expected relaxed")
        };
        for row in m.steps[0].to_vec().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn symbol_vocab_mismatch_is_an_error() {
        let mut r = rng::stream(0, rng::PARAMS, 0);
        let core = Linear::new(3, 5, &mut r).unwrap();
        let s = SymbolSender::reinforce(Box::new(core), 4).unwrap();
        assert!(matches!(
            s.send(&input(), Decoding::Sample(&mut r)),
            Err(Error::ChannelMismatch(_))
        ));
    }

    #[test]
    fn degenerate_reinforce_sender_always_sends_zero() {
        let mut r = rng::stream(0, rng::PARAMS, 0);
        let core = Linear::new(3, 4, &mut r).unwrap();
        core.weight.set_values(&[0.0; 12]).unwrap();
        core.bias.set_values(&[0.0, -1e9, -1e9, -1e9]).unwrap();
        let s = SymbolSender::reinforce(Box::new(core), 4).unwrap();
        for _ in 0..50 {
            let m = s.send(&input(), Decoding::Sample(&mut r)).unwrap();
            assert_eq!(m.symbols(), vec![0, 0]);
        }
    }

    #[test]
    fn identical_seeds_identical_messages() {
        for mode in [ChannelMode::gs(1.0), ChannelMode::Reinforce] {
            let a = seq_sender(mode, 7).send(&input(), Decoding::Sample(&mut rng::stream(1, rng::SAMPLING, 0)));
            let b = seq_sender(mode, 7).send(&input(), Decoding::Sample(&mut rng::stream(1, rng::SAMPLING, 0)));
            assert_eq!(a.unwrap().symbols(), b.unwrap().symbols());
        }
    }

    #[test]
    fn forced_scoring_masks_after_eos() {
        let s = seq_sender(ChannelMode::Reinforce, 3);
        let m = s.score(&input(), &[3, 0, 2, 1, 2, 3]).unwrap();
        assert_eq!(m.lengths(), &[2, 3]);
        assert_eq!(m.symbols(), &[3, 0, 0, 1, 2, 3]);
        let probe = s.score(&input(), &[3, 0, 1, 1, 2, 3]).unwrap();
        assert_eq!(m.log_prob.to_vec(), probe.log_prob.to_vec());
        let lp = m.log_prob.to_vec();
        assert!(lp.iter().all(|&v| v <= 0.0));

        // the sum covers exactly the first two steps of row 0
        let one = s.score(&input(), &[3, 0, 0, 1, 0, 0]).unwrap().log_prob.to_vec();
        assert_eq!(one[0], lp[0]);
        assert!(one[1] > lp[1]);
    }

    #[test]
    fn sampled_lengths_are_consistent() {
        let s = seq_sender(ChannelMode::Reinforce, 4);
        let mut r = rng::stream(2, rng::SAMPLING, 0);
        for _ in 0..50 {
            let Message::Discrete(m) = s.send(&input(), Decoding::Sample(&mut r)).unwrap() else {
                panic!()
            };
            assert_eq!(m.lengths(), super::super::message_lengths(m.symbols(), 3).as_slice());
            let rescored = s.score(&input(), m.symbols()).unwrap();
            assert_eq!(rescored.log_prob.to_vec(), m.log_prob.to_vec());
        }
    }

    #[test]
    fn relaxed_sequence_steps_are_normalized() {
        let s = seq_sender(ChannelMode::gs(0.5), 5);
        let Message::Relaxed(m) = s.send(&input(), Decoding::Sample(&mut rng::stream(0, rng::SAMPLING, 0))).unwrap() else {
            panic!()
        };
        assert_eq!(m.steps.len(), 3);
        for step in &m.steps {
            for row in step.to_vec().chunks(4) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn receiver_ignores_symbols_after_eos() {
        let rcv = seq_receiver(1);
        let a = DiscreteMessage::from_symbols(vec![2, 0, 1, 0, 3, 3], 3).unwrap();
        let b = DiscreteMessage::from_symbols(vec![2, 0, 3, 0, 1, 2], 3).unwrap();
        let oa = rcv.receive(&Message::Discrete(a), None).unwrap().output.to_vec();
        let ob = rcv.receive(&Message::Discrete(b), None).unwrap().output.to_vec();
        assert_eq!(oa, ob);
    }

    #[test]
    fn length_one_message_uses_one_step() {
        let rcv = seq_receiver(2);
        let full = DiscreteMessage::from_symbols(vec![0, 2, 2], 3).unwrap();
        let short = DiscreteMessage::from_symbols(vec![0], 1).unwrap();
        let a = rcv.encode(&Message::Discrete(full)).unwrap().to_vec();
        let b = rcv.encode(&Message::Discrete(short)).unwrap().to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn one_hot_relaxed_matches_discrete() {
        let rcv = seq_receiver(3);
        let symbols = vec![2, 1, 0, 3, 3, 1];
        let steps = (0..3)
            .map(|t| {
                let mut v = vec![0.0; 8];
                v[symbols[t]] = 1.0;
                v[4 + symbols[3 + t]] = 1.0;
                Tensor::new(v, &[2, 4]).unwrap()
            })
            .collect();
        let relaxed = Message::Relaxed(RelaxedMessage::new(steps, 1.0).unwrap());
        let discrete = Message::Discrete(DiscreteMessage::from_symbols(symbols, 3).unwrap());
        let a = rcv.receive(&relaxed, None).unwrap().output.to_vec();
        let b = rcv.receive(&discrete, None).unwrap().output.to_vec();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn receiver_rejects_foreign_vocabulary() {
        let rcv = seq_receiver(4);
        let m = DiscreteMessage::from_symbols(vec![7, 0, 0], 3).unwrap();
        assert!(rcv.receive(&Message::Discrete(m), None).is_err());
        let long = DiscreteMessage::from_symbols(vec![1, 1, 1, 1], 4).unwrap();
        assert!(rcv.receive(&Message::Discrete(long), None).is_err());
    }

    #[test]
    fn relaxed_sequence_gradient_matches_differences() {
        let s = seq_sender(ChannelMode::gs(1.0), 9);
        let rcv = seq_receiver(9);
        let x = input();
        let mut params: Vec<Tensor> = s.parameters().into_iter().map(|(_, t)| t).collect();
        params.extend(rcv.parameters().into_iter().map(|(_, t)| t));
        let f = || {
            let mut r = rng::stream(11, rng::SAMPLING, 0);
            let m = s.send(&x, Decoding::Sample(&mut r))?;
            rcv.receive(&m, None)?.output.tanh()?.sum_all()
        };
        let err = tensor::grad_check_params(&params, f, 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }
}

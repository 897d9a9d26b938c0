use crate::error::{Error, Result};
use crate::tensor::{argmax, Tensor};

use super::EOS;

/// Per-row effective length of a flat `[B x max_len]` symbol grid: index of
/// the first [`EOS`] plus one, or `max_len` when there is none.
pub fn message_lengths(symbols: &[usize], max_len: usize) -> Vec<usize> {
    symbols
        .chunks(max_len.max(1))
        .map(|row| row.iter().position(|&s| s == EOS).map_or(row.len(), |p| p + 1))
        .collect()
}

/// Replaces every symbol after a row's first [`EOS`] with padding (`EOS`), so
/// that two messages differing only past their end become identical.
pub fn canonicalize(symbols: &[usize], max_len: usize) -> Vec<usize> {
    let mut out = symbols.to_vec();
    for row in out.chunks_mut(max_len.max(1)) {
        if let Some(p) = row.iter().position(|&s| s == EOS) {
            row[p..].iter_mut().for_each(|s| *s = EOS);
        }
    }
    out
}

/// Sampled or decoded symbols with their log-probabilities.
#[derive(Clone, Debug)]
pub struct DiscreteMessage {
    symbols: Vec<usize>,
    max_len: usize,
    lengths: Vec<usize>,
    /// Summed log-probability of the emitted symbols, eos included. `[B]`
    pub log_prob: Tensor,
    /// Mean per-step entropy over the emitted positions. `[B]`
    pub entropy: Tensor,
}

impl DiscreteMessage {
    pub fn new(symbols: Vec<usize>, max_len: usize, log_prob: Tensor, entropy: Tensor) -> Result<Self> {
        if max_len == 0 || symbols.len() % max_len != 0 {
            return Err(Error::invalid(format!(
                "{} symbols do not form rows of length {max_len}",
                symbols.len()
            )));
        }
        let batch = symbols.len() / max_len;
        for t in [&log_prob, &entropy] {
            if t.shape() != [batch] {
                return Err(Error::BadShape {
                    op: "DiscreteMessage",
                    expected: format!("[{batch}]"),
                    got: t.shape().to_vec(),
                });
            }
        }
        let symbols = canonicalize(&symbols, max_len);
        let lengths = message_lengths(&symbols, max_len);
        Ok(DiscreteMessage {
            symbols,
            max_len,
            lengths,
            log_prob,
            entropy,
        })
    }

    /// A message without probabilities, e.g. for probing a Receiver.
    pub fn from_symbols(symbols: Vec<usize>, max_len: usize) -> Result<Self> {
        let batch = symbols.len() / max_len.max(1);
        DiscreteMessage::new(symbols, max_len, Tensor::zeros(&[batch]), Tensor::zeros(&[batch]))
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Canonical symbols, `[B x max_len]` flattened.
    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Symbols of all rows at step `t`.
    pub fn column(&self, t: usize) -> Vec<usize> {
        self.symbols.chunks(self.max_len).map(|row| row[t]).collect()
    }
}

/// Gumbel-Softmax output: one `[B x V]` tensor of relaxed symbols per step.
#[derive(Clone, Debug)]
pub struct RelaxedMessage {
    pub steps: Vec<Tensor>,
    pub temperature: f64,
    /// Mean per-step entropy `[B]` of the Sender's distribution, if known.
    pub entropy: Option<Tensor>,
    lengths: Vec<usize>,
}

impl RelaxedMessage {
    pub fn new(steps: Vec<Tensor>, temperature: f64) -> Result<Self> {
        let first = steps.first().ok_or_else(|| Error::invalid("relaxed message without steps"))?;
        if first.rank() != 2 || steps.iter().any(|s| s.shape() != first.shape()) {
            return Err(Error::BadShape {
                op: "RelaxedMessage",
                expected: "equal [batch x vocab] steps".into(),
                got: first.shape().to_vec(),
            });
        }
        let mut msg = RelaxedMessage {
            steps,
            temperature,
            entropy: None,
            lengths: Vec::new(),
        };
        msg.lengths = message_lengths(&msg.hard_symbols(), msg.max_len());
        Ok(msg)
    }

    pub fn with_entropy(mut self, entropy: Tensor) -> Result<Self> {
        if entropy.shape() != [self.batch()] {
            return Err(Error::BadShape {
                op: "RelaxedMessage entropy",
                expected: format!("[{}]", self.batch()),
                got: entropy.shape().to_vec(),
            });
        }
        self.entropy = Some(entropy);
        Ok(self)
    }

    pub fn batch(&self) -> usize {
        self.steps[0].shape()[0]
    }

    pub fn vocab_size(&self) -> usize {
        self.steps[0].shape()[1]
    }

    pub fn max_len(&self) -> usize {
        self.steps.len()
    }

    /// Lengths of the argmax-decoded message (reporting only).
    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Row-wise argmax of every step, canonicalized, `[B x L]` flattened.
    pub fn hard_symbols(&self) -> Vec<usize> {
        let (b, v, l) = (self.batch(), self.vocab_size(), self.max_len());
        let values: Vec<_> = self.steps.iter().map(Tensor::values).collect();
        let mut out = vec![0; b * l];
        for (t, step) in values.iter().enumerate() {
            for (row, probs) in step.chunks(v).enumerate() {
                out[row * l + t] = argmax(probs);
            }
        }
        canonicalize(&out, l)
    }
}

#[derive(Clone, Debug)]
pub enum Message {
    Discrete(DiscreteMessage),
    Relaxed(RelaxedMessage),
}

impl Message {
    pub fn batch(&self) -> usize {
        match self {
            Message::Discrete(m) => m.batch(),
            Message::Relaxed(m) => m.batch(),
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            Message::Discrete(m) => m.max_len(),
            Message::Relaxed(m) => m.max_len(),
        }
    }

    pub fn lengths(&self) -> &[usize] {
        match self {
            Message::Discrete(m) => m.lengths(),
            Message::Relaxed(m) => m.lengths(),
        }
    }

    /// Canonical discrete symbols; argmax-decoded for relaxed messages.
    pub fn symbols(&self) -> Vec<usize> {
        match self {
            Message::Discrete(m) => m.symbols().to_vec(),
            Message::Relaxed(m) => m.hard_symbols(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMessage> {
        match self {
            Message::Discrete(m) => Some(m),
            Message::Relaxed(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lengths_follow_first_eos() {
        assert_eq!(message_lengths(&[0, 4, 7, 3, 0, 5, 2, 3, 4], 3), vec![1, 2, 3]);
        assert_eq!(message_lengths(&[5, 0], 1), vec![1, 1]);
    }

    #[test]
    fn canonical_form_pads_after_eos() {
        assert_eq!(canonicalize(&[3, 0, 5, 0, 9, 9], 3), vec![3, 0, 0, 0, 0, 0]);
        let m = DiscreteMessage::from_symbols(vec![3, 0, 5], 3).unwrap();
        assert_eq!(m.symbols(), &[3, 0, 0]);
        assert_eq!(m.lengths(), &[2]);
    }

    #[test]
    fn relaxed_lengths_use_argmax() {
        let s1 = Tensor::new(vec![0.1, 0.9, 0.6, 0.4], &[2, 2]).unwrap();
        let s2 = Tensor::new(vec![0.7, 0.3, 0.2, 0.8], &[2, 2]).unwrap();
        let m = RelaxedMessage::new(vec![s1, s2], 1.0).unwrap();
        assert_eq!(m.lengths(), &[2, 1]);
        assert_eq!(m.hard_symbols(), vec![1, 0, 0, 0]);
    }

    proptest! {
        #[test]
        fn lengths_are_within_bounds(rows in proptest::collection::vec(proptest::collection::vec(0usize..4, 3), 1..20)) {
            let flat: Vec<usize> = rows.concat();
            let lens = message_lengths(&flat, 3);
            prop_assert_eq!(lens.len(), rows.len());
            for (row, len) in rows.iter().zip(&lens) {
                prop_assert!((1..=3).contains(len));
                prop_assert!(row[..len - 1].iter().all(|&s| s != EOS));
            }
            prop_assert_eq!(message_lengths(&canonicalize(&flat, 3), 3), lens);
        }
    }
}

//! Tools for inspecting emergent languages: exhaustive codebooks, message
//! statistics and ranked grid-search summaries.

mod codebook;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Interaction;

pub use codebook::{dump_codebook, enumerate_messages, write_pgm, Codebook, CodebookEntry};
pub use report::{grid_report, ResultRow, RunStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageStats {
    pub count: usize,
    pub unique: usize,
    /// Entropy in bits of the empirical distribution of whole messages.
    pub entropy: f64,
    /// Entropy in bits of the symbol at each position, over the messages
    /// long enough to emit it.
    pub position_entropy: Vec<f64>,
    pub mean_length: f64,
}

/// Base-2 Shannon entropy of a count table.
pub fn entropy_bits<K>(counts: &BTreeMap<K, usize>) -> f64 {
    let n: usize = counts.values().sum();
    if n == 0 {
        return 0.0;
    }
    let h = counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum::<f64>();
    // -0.0 for a single message
    h.max(0.0)
}

pub fn message_stats(interactions: &[Interaction]) -> Result<MessageStats> {
    let messages: Vec<&[usize]> = interactions
        .iter()
        .flat_map(|it| (0..it.len()).map(move |i| it.message(i)))
        .collect();
    if messages.is_empty() {
        return Err(Error::invalid("no messages to analyse"));
    }
    let mut whole: BTreeMap<&[usize], usize> = BTreeMap::new();
    for m in &messages {
        *whole.entry(m).or_default() += 1;
    }
    let max_len = messages.iter().map(|m| m.len()).max().unwrap_or(0);
    let position_entropy = (0..max_len)
        .map(|t| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for m in messages.iter().filter(|m| m.len() > t) {
                *counts.entry(m[t]).or_default() += 1;
            }
            entropy_bits(&counts)
        })
        .collect();
    Ok(MessageStats {
        count: messages.len(),
        unique: whole.len(),
        entropy: entropy_bits(&whole),
        position_entropy,
        mean_length: messages.iter().map(|m| m.len()).sum::<usize>() as f64 / messages.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Array;
    use proptest::prelude::*;

    fn interaction(symbols: Vec<usize>, max_len: usize) -> Interaction {
        let n = symbols.len() / max_len;
        Interaction {
            sender_input: Array { shape: vec![n, 0], values: vec![] },
            lengths: crate::channel::message_lengths(&symbols, max_len),
            symbols,
            max_len,
            receiver_output: Array { shape: vec![n, 0], values: vec![] },
            loss: vec![0.0; n],
            aux: BTreeMap::new(),
        }
    }

    #[test]
    fn hand_computed_entropies() {
        let eight = interaction((1..=8).collect(), 1);
        assert!((message_stats(&[eight]).unwrap().entropy - 3.0).abs() < 1e-12);
        let same = interaction(vec![4; 5], 1);
        assert_eq!(message_stats(&[same]).unwrap().entropy, 0.0);
        let abc = interaction(vec![1, 2, 3, 3], 1);
        assert!((message_stats(&[abc]).unwrap().entropy - 1.5).abs() < 1e-12);
        assert!(message_stats(&[]).is_err());
    }

    #[test]
    fn positions_count_only_emitted_symbols() {
        // messages: [0], [2 0], [2 3], [1 0]
        let it = interaction(vec![0, 5, 2, 0, 2, 3, 1, 0], 2);
        let s = message_stats(&[it]).unwrap();
        assert_eq!(s.unique, 4);
        assert_eq!(s.mean_length, 1.75);
        // position 1 is emitted by 3 messages: symbols 0, 3, 0
        let expected = -(2.0f64 / 3.0) * (2.0f64 / 3.0).log2() - (1.0 / 3.0) * (1.0f64 / 3.0).log2();
        assert!((s.position_entropy[1] - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn entropy_bounds(symbols in proptest::collection::vec(1usize..6, 1..60)) {
            let s = message_stats(&[interaction(symbols.clone(), 1)]).unwrap();
            prop_assert!(s.entropy >= 0.0);
            prop_assert!(s.entropy <= (s.unique as f64).log2() + 1e-12);
            let relabeled: Vec<usize> = symbols.iter().map(|&x| 7 - x).collect();
            let r = message_stats(&[interaction(relabeled, 1)]).unwrap();
            prop_assert!((r.entropy - s.entropy).abs() < 1e-12);
        }

        #[test]
        fn uniform_maximizes_entropy(k in 1usize..9, reps in 1usize..5) {
            let symbols: Vec<usize> = (0..k * reps).map(|i| 1 + i % k).collect();
            let s = message_stats(&[interaction(symbols, 1)]).unwrap();
            prop_assert!((s.entropy - (k as f64).log2()).abs() < 1e-12);
        }
    }
}

//! Seed splitting.
//!
//! One master seed feeds every random stream of a run. A stream is named by a
//! label and an index; its 32-byte ChaCha8 seed is
//! `SHA-256(master as u64 LE || label bytes || 0x00 || index as u64 LE)`.
//! Streams with different labels are independent, so e.g. turning on data
//! shuffling cannot change parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub const PARAMS: &str = "params";
pub const SAMPLING: &str = "sampling";
pub const SHUFFLE: &str = "shuffle";
pub const DISTRACTORS: &str = "distractors";
pub const DATA: &str = "data";
pub const GRID: &str = "grid";

pub fn derive_seed(master: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn stream(master: u64, label: &str, index: u64) -> Rng {
    Rng::from_seed(derive_seed(master, label, index))
}

/// A derived 64-bit seed, e.g. for a child run of a grid.
pub fn derive_u64(master: u64, label: &str, index: u64) -> u64 {
    let s = derive_seed(master, label, index);
    u64::from_le_bytes(s[..8].try_into().expect("8 bytes"))
}

/// Exact position of a ChaCha stream, for checkpointing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

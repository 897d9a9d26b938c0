//! Training framework for pairs of neural agents that communicate through a
//! discrete channel.
//!
//! A *Sender* turns its input into a message over a finite vocabulary, a
//! *Receiver* turns the message (plus optional side input) into an output, and
//! a [`game::Game`] scores that output with a user loss. The channel can be
//! optimized with the Gumbel-Softmax relaxation or with REINFORCE, and messages
//! can be single symbols or variable-length sequences terminated by the
//! end-of-sequence symbol `0`. Switching between the four combinations only
//! changes the wrapper around the user's agent cores.
//!
//! Everything runs on a small 64-bit tensor library with define-by-run reverse
//! mode differentiation ([`tensor`]).

pub mod analysis;
pub mod channel;
pub mod data;
pub mod error;
pub mod game;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod zoo;

pub use error::{Error, Result};
pub use tensor::Tensor;

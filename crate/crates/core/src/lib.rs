//! Higher-order (H-LRU) and block-diagonal (BD-LRU) linear recurrent units.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense arrays, a deterministic RNG and a small reverse-mode tape.
//! * [`recurrence`]: selective gates, L1 gate normalization and the sequential
//!   H-LRU / BD-LRU layer forward pass.
//! * [`scan`]: the block-diagonal associative combine and a Blelloch prefix scan.
//! * [`tasks`]: deterministic generators for the synthetic benchmarks.
//! * [`training`]: model assembly, AdamW, cosine schedule, sweeps and evaluation.
//! * [`analysis`]: transition spectra, FLOP accounting and the dense
//!   block-attention operator.

pub mod analysis;
mod csvout;
mod error;
pub mod recurrence;
pub mod scan;
pub mod tasks;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Rng, Scalar, Tape, Tensor, Var};

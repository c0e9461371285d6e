//! Pyramidal recurrent units for word-level language modelling.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`autodiff`], [`gradcheck`]: dense values, a reverse-mode
//!   tape and a finite-difference oracle.
//! * [`transforms`]: linear, grouped linear and pyramidal transforms.
//! * [`recurrent`]: the PRU cell, stacking and unrolling, with
//!   [`lstm_reference`] as an independent LSTM.
//! * [`lm`], [`dropout`]: embedding, decoder, loss and perplexity.
//! * [`training`]: vocabulary, batching, SGD, the training loop and checkpoints.
//! * [`analysis`]: parameter accounting, entropy, embedding variance,
//!   saliency and MAC counts.
//!
//! Work that is independent across streams, contexts or coordinates goes
//! through [`parallel`], which uses rayon when the `parallel` feature is on.

pub mod analysis;
pub mod autodiff;
pub mod config;
pub mod dropout;
pub mod error;
pub mod gradcheck;
pub mod lm;
pub mod lstm_reference;
pub mod parallel;
pub mod recurrent;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod transforms;

pub use autodiff::{Gradients, ParamId, ParamStore, Parameter, Tape, Var};
pub use error::{Error, Result};
pub use parallel::Execution;
pub use tensor::Tensor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every random draw in the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with stream coordinates into an independent seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

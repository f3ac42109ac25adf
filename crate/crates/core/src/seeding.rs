//! Keyed random streams.
//!
//! Every stochastic decision in a run draws from a stream derived from
//! `(seed, purpose, generation, index)`. Streams never share state, so the
//! outcome of a run does not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    InitGenotype = 1,
    InitEval = 2,
    TrainerInit = 3,
    Select = 4,
    Offspring = 5,
    Eval = 6,
    Train = 7,
    SinglePolicy = 8,
    Check = 9,
}

/// Derive an independent stream for one `(purpose, generation, index)` slot.
pub fn stream(seed: u64, purpose: Purpose, generation: u64, index: u64) -> Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&generation.to_le_bytes());
    key[24..32].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

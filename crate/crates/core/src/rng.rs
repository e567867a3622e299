//! Deterministic random stream derivation.
//!
//! Every stochastic choice in the crate (weight init, shuffling, dropout
//! masks, synthetic data, sweep corruption) draws from its own ChaCha8 stream
//! derived from a user seed and a purpose tag. Streams never share state, so
//! reordering or parallelizing the work that consumes them cannot change any
//! draw.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags. Fixed for the life of the file formats.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SYNTHETIC: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SWEEP: u64 = 6;
    /// Modality masking for corruption studies.
    pub const MASK: u64 = 7;
}

/// SplitMix64 step, the standard 64-bit finalizer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha8 stream keyed by `(seed, purpose)`.
///
/// The 256-bit key is expanded from the pair with SplitMix64 so that nearby
/// seeds or tags still give unrelated streams.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut state = seed ^ purpose.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

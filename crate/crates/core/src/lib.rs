//! Peephole optimization of quantum circuits by 2D window replacement.
//!
//! The pipeline: lay a circuit out on a qubit x time-slot grid
//! ([`circuit::schedule`]), draw a window ([`sampler`]), cut the window out
//! ([`circuit::split`]), shrink it to its active wires
//! ([`unitary::compact`]), look for a strictly shorter equivalent
//! ([`rewrite`]) and splice it back. [`optimize`] iterates that loop;
//! [`guidance`] provides the learned attention map that biases window
//! selection, trained on labels from [`dataset`].

pub mod bench;
pub mod binfmt;
pub mod circuit;
pub mod dataset;
pub mod error;
pub mod guidance;
pub mod optimize;
pub mod qasm;
pub mod rewrite;
pub mod sampler;
pub mod unitary;

pub use circuit::{Circuit, Gate, GateKind, GateSet, SlotLayout, Window};
pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere a seed is accepted.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with stream indices (splitmix64 finalizer), so that
/// parallel work items get independent, order-free RNG streams.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ a) ^ b.rotate_left(32))
}

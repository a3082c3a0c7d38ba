//! Seeded, splittable random streams.
//!
//! Every random decision in a run is drawn from a stream derived from the
//! master seed, a purpose tag, and a pair of indices (typically the client id
//! and the round). Streams never share state, so clients can be simulated in
//! any order or in parallel and still reproduce bit-for-bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// What a stream is used for. Distinct purposes never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Selection = 1,
    Training = 2,
    Noise = 3,
    Quantization = 4,
    Encryption = 5,
    KeyGeneration = 6,
    Initialization = 7,
    Data = 8,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream for `(master, purpose, a, b)`.
pub fn derive_stream(master: u64, purpose: Purpose, a: u64, b: u64) -> Stream {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    let mut seed = [0u8; 32];
    for (i, word) in [purpose as u64, a, b, 0x6665_6463_7279_7074].iter().enumerate() {
        state ^= word.wrapping_mul(0xd605_bbb5_8c8a_bbd5).rotate_left(17 * i as u32 + 1);
        acc ^= splitmix64(&mut state);
        seed[i * 8..(i + 1) * 8].copy_from_slice(&acc.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

/// Uniform double in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in `(0, 1]` whose smallest value is exactly `2^-64`.
#[inline]
pub fn uniform_open0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() as f64 + 1.0) * 2f64.powi(-64)
}

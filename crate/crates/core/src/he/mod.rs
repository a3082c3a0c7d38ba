//! Additively homomorphic aggregation of packed quantised counts.
//!
//! Counts are packed into big-integer plaintexts as fixed-width bit fields
//! ([`packing`]), encrypted under Paillier ([`paillier`]) or passed through
//! the plaintext [`mock`] backend, summed as ciphertexts and decrypted by
//! clients. Each slot carries `guard_bits` of headroom above the
//! `slot_bits`-bit count so that a `K_max`-way sum never carries into the
//! neighbouring slot; reducing the decrypted slot modulo `2^slot_bits`
//! afterwards gives the same value as per-slot modular arithmetic.

pub mod mock;
pub mod packing;
pub mod paillier;
pub mod prime;
pub mod serial;

use std::fmt::Debug;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::RngCore;
use rayon::prelude::*;

pub use self::packing::{pack, unpack, PackedPlaintext, SlotLayout};
use crate::{Error, Result};

/// Default per-slot value width: the plaintext modulus is `2^26`.
pub const DEFAULT_SLOT_BITS: u32 = 26;
/// Carry headroom for sums of up to 1024 slots.
pub const DEFAULT_GUARD_BITS: u32 = 10;
pub const DEFAULT_KEY_BITS: u64 = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(pub BigUint);

/// Public half of a backend: everything the server may hold.
pub trait EncryptionKey: Send + Sync + Debug {
    /// Number of plaintext bits usable for packing (`2^capacity <= n`).
    fn capacity_bits(&self) -> u64;

    fn encrypt(&self, m: &BigUint, rng: &mut dyn RngCore) -> Result<Ciphertext>;

    /// Homomorphic sum of a nonempty slice.
    fn add(&self, cts: &[Ciphertext]) -> Result<Ciphertext>;
}

/// Secret half of a backend, held by clients only.
pub trait DecryptionKey: Send + Sync + Debug {
    fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Paillier,
    Mock,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paillier" => Ok(Backend::Paillier),
            "mock" => Ok(Backend::Mock),
            other => Err(Error::invalid(format!("unknown HE backend {other:?}"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Paillier => "paillier",
            Backend::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KeyMaterial {
    pub public: Arc<dyn EncryptionKey>,
    pub secret: Arc<dyn DecryptionKey>,
}

/// Generate keys for `backend`. Both backends expose the same packing
/// capacity for a given `key_bits`.
pub fn generate_keys(backend: Backend, key_bits: u64, rng: &mut dyn RngCore) -> Result<KeyMaterial> {
    match backend {
        Backend::Paillier => {
            let kp = paillier::keygen(key_bits, rng)?;
            Ok(KeyMaterial { public: Arc::new(kp.public), secret: Arc::new(kp.secret) })
        }
        Backend::Mock => {
            let key = mock::MockKey::new(key_bits)?;
            Ok(KeyMaterial { public: Arc::new(key.clone()), secret: Arc::new(key) })
        }
    }
}

/// Encrypted model-sized vector of packed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CiphertextBundle {
    pub ciphertexts: Vec<Ciphertext>,
    pub layout: SlotLayout,
    pub dimension: usize,
}

/// Pack and encrypt `counts` (each `< 2^slot_bits`).
pub fn encrypt_counts(
    pk: &dyn EncryptionKey,
    counts: &[u64],
    layout: &SlotLayout,
    k_max: usize,
    rng: &mut dyn RngCore,
) -> Result<CiphertextBundle> {
    if layout.capacity_bits() > pk.capacity_bits() {
        return Err(Error::PlaintextTooLarge);
    }
    let ciphertexts = pack(counts, layout, k_max)?
        .iter()
        .map(|pt| pk.encrypt(&pt.value, rng))
        .collect::<Result<_>>()?;
    Ok(CiphertextBundle { ciphertexts, layout: *layout, dimension: counts.len() })
}

fn check_layouts(bundles: &[CiphertextBundle]) -> Result<&CiphertextBundle> {
    let first = bundles.first().ok_or(Error::EmptyAggregation)?;
    if bundles.iter().any(|b| {
        b.layout != first.layout
            || b.dimension != first.dimension
            || b.ciphertexts.len() != first.ciphertexts.len()
    }) {
        return Err(Error::LayoutMismatch);
    }
    Ok(first)
}

/// Slot-wise homomorphic sum of bundles, one ciphertext position at a time.
pub fn aggregate(pk: &dyn EncryptionKey, bundles: &[CiphertextBundle]) -> Result<CiphertextBundle> {
    let first = check_layouts(bundles)?;
    let ciphertexts = (0..first.ciphertexts.len())
        .into_par_iter()
        .map(|i| {
            let column: Vec<Ciphertext> = bundles.iter().map(|b| b.ciphertexts[i].clone()).collect();
            pk.add(&column)
        })
        .collect::<Result<_>>()?;
    Ok(CiphertextBundle { ciphertexts, layout: first.layout, dimension: first.dimension })
}

/// Same as [`aggregate`], reducing pairwise in tree order.
pub fn aggregate_tree(pk: &dyn EncryptionKey, bundles: &[CiphertextBundle]) -> Result<CiphertextBundle> {
    let first = check_layouts(bundles)?;
    let ciphertexts = (0..first.ciphertexts.len())
        .map(|i| {
            let mut level: Vec<Ciphertext> = bundles.iter().map(|b| b.ciphertexts[i].clone()).collect();
            while level.len() > 1 {
                level = level
                    .par_chunks(2)
                    .map(|pair| if pair.len() == 2 { pk.add(pair) } else { Ok(pair[0].clone()) })
                    .collect::<Result<_>>()?;
            }
            Ok(level.pop().expect("nonempty"))
        })
        .collect::<Result<_>>()?;
    Ok(CiphertextBundle { ciphertexts, layout: first.layout, dimension: first.dimension })
}

/// Decrypt and unpack full-width slot values (count plus guard headroom).
pub fn decrypt_bundle(sk: &dyn DecryptionKey, bundle: &CiphertextBundle) -> Result<Vec<u64>> {
    let values = bundle
        .ciphertexts
        .par_iter()
        .map(|ct| sk.decrypt(ct))
        .collect::<Result<Vec<_>>>()?;
    unpack(&values, &bundle.layout, bundle.dimension)
}

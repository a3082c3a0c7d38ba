//! Seeded probable-prime generation (trial division + Miller–Rabin).

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use crate::{Error, Result};

const MILLER_RABIN_ROUNDS: usize = 32;
const MAX_CANDIDATES: usize = 200_000;

fn small_primes() -> &'static [u32] {
    static PRIMES: std::sync::OnceLock<Vec<u32>> = std::sync::OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = 2000usize;
        let mut sieve = vec![true; limit];
        sieve[0] = false;
        sieve[1] = false;
        for i in 2..limit {
            if sieve[i] {
                let mut j = i * i;
                while j < limit {
                    sieve[j] = false;
                    j += i;
                }
            }
        }
        (0..limit).filter(|&i| sieve[i]).map(|i| i as u32).collect()
    })
}

/// Uniform integer with exactly `bits` random low bits (top bits cleared).
pub fn random_bits(bits: u64, rng: &mut dyn RngCore) -> BigUint {
    let words = bits.div_ceil(32) as usize;
    let mut digits: Vec<u32> = (0..words).map(|_| rng.next_u32()).collect();
    let excess = (words as u64 * 32 - bits) as u32;
    if excess > 0 {
        if let Some(top) = digits.last_mut() {
            *top &= u32::MAX >> excess;
        }
    }
    BigUint::new(digits)
}

/// Uniform integer in `[0, bound)` by rejection.
pub fn random_below(bound: &BigUint, rng: &mut dyn RngCore) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    loop {
        let candidate = random_bits(bits, rng);
        if &candidate < bound {
            return candidate;
        }
    }
}

pub fn is_probable_prime(n: &BigUint, rng: &mut dyn RngCore) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let mut d = n_minus_one.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    let span = n - 3u32;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = random_below(&span, rng) + &two;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Probable prime with exactly `bits` bits and its top two bits set, so that
/// the product of two such primes has exactly `2·bits` bits.
pub fn generate_prime(bits: u64, rng: &mut dyn RngCore) -> Result<BigUint> {
    if bits < 8 {
        return Err(Error::KeyGeneration(format!("prime size {bits} is too small")));
    }
    let top = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    for _ in 0..MAX_CANDIDATES {
        let candidate = random_bits(bits, rng) | &top | BigUint::one();
        if is_probable_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
    Err(Error::KeyGeneration(format!("no {bits}-bit prime after {MAX_CANDIDATES} candidates")))
}

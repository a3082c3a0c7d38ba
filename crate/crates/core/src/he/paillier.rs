//! Paillier cryptosystem with `g = n + 1`.
//!
//! `Enc(m) = (1 + m·n)·r^n mod n²`, `Dec(c) = L(c^λ mod n²)·μ mod n` with
//! `L(u) = (u − 1)/n`, `λ = lcm(p − 1, q − 1)` and `μ = λ⁻¹ mod n`. The
//! product of ciphertexts decrypts to the sum of plaintexts modulo `n`.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use super::prime::{generate_prime, random_below};
use super::{Ciphertext, DecryptionKey, EncryptionKey};
use crate::{Error, Result};

pub const MIN_KEY_BITS: u64 = 64;
const KEYGEN_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    public: PublicKey,
    lambda: BigUint,
    mu: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self> {
        if n < BigUint::from(6u32) {
            return Err(Error::invalid("Paillier modulus is too small"));
        }
        let n_squared = &n * &n;
        Ok(Self { n, n_squared })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    /// The generator, always `n + 1`.
    pub fn g(&self) -> BigUint {
        &self.n + 1u32
    }

    /// Encrypt with an explicit nonce `r ∈ Z*_n`.
    pub fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        if m >= &self.n {
            return Err(Error::PlaintextTooLarge);
        }
        // (n + 1)^m = 1 + m·n  (mod n²)
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext((gm * rn) % &self.n_squared))
    }

    fn random_nonce(&self, rng: &mut dyn RngCore) -> BigUint {
        loop {
            let r = random_below(&self.n, rng);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    fn check(&self, ct: &Ciphertext) -> Result<()> {
        if ct.0 >= self.n_squared {
            return Err(Error::MalformedCiphertext);
        }
        Ok(())
    }
}

impl EncryptionKey for PublicKey {
    fn capacity_bits(&self) -> u64 {
        self.n.bits() - 1
    }

    fn encrypt(&self, m: &BigUint, rng: &mut dyn RngCore) -> Result<Ciphertext> {
        let r = self.random_nonce(rng);
        self.encrypt_with_nonce(m, &r)
    }

    fn add(&self, cts: &[Ciphertext]) -> Result<Ciphertext> {
        let (first, rest) = cts.split_first().ok_or(Error::EmptyAggregation)?;
        self.check(first)?;
        let mut acc = first.0.clone();
        for ct in rest {
            self.check(ct)?;
            acc = (acc * &ct.0) % &self.n_squared;
        }
        Ok(Ciphertext(acc))
    }
}

impl SecretKey {
    pub fn from_parts(public: PublicKey, lambda: BigUint, mu: BigUint) -> Self {
        Self { public, lambda, mu }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

impl DecryptionKey for SecretKey {
    fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.public.check(ct)?;
        let n = &self.public.n;
        let u = ct.0.modpow(&self.lambda, &self.public.n_squared);
        if u.is_zero() {
            return Err(Error::MalformedCiphertext);
        }
        let l = (u - 1u32) / n;
        Ok((l * &self.mu) % n)
    }
}

impl KeyPair {
    /// Key pair from two distinct primes (not checked for primality).
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self> {
        if p == q {
            return Err(Error::KeyGeneration("p and q must differ".into()));
        }
        let n = p * q;
        let p1 = p - 1u32;
        let q1 = q - 1u32;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            return Err(Error::KeyGeneration("gcd(n, φ(n)) != 1".into()));
        }
        let lambda = p1.lcm(&q1);
        let mu = lambda
            .modinv(&n)
            .ok_or_else(|| Error::KeyGeneration("λ is not invertible mod n".into()))?;
        let public = PublicKey::from_modulus(n)?;
        Ok(Self { secret: SecretKey { public: public.clone(), lambda, mu }, public })
    }
}

/// Fresh key pair whose modulus has exactly `key_bits` bits.
pub fn keygen(key_bits: u64, rng: &mut dyn RngCore) -> Result<KeyPair> {
    if key_bits < MIN_KEY_BITS || key_bits % 2 != 0 {
        return Err(Error::invalid(format!(
            "key size must be even and >= {MIN_KEY_BITS} bits, got {key_bits}"
        )));
    }
    let half = key_bits / 2;
    for _ in 0..KEYGEN_ATTEMPTS {
        let p = generate_prime(half, rng)?;
        let q = generate_prime(half, rng)?;
        if let Ok(kp) = KeyPair::from_primes(&p, &q) {
            debug_assert_eq!(kp.public.n.bits(), key_bits);
            return Ok(kp);
        }
    }
    Err(Error::KeyGeneration(format!("gave up after {KEYGEN_ATTEMPTS} prime pairs")))
}

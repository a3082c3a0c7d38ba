//! Plaintext stand-in for the Paillier backend.
//!
//! "Ciphertexts" are the plaintexts themselves and addition is integer
//! addition modulo `2^key_bits`. Packing capacity matches a Paillier key of
//! the same size, so both backends produce identical slot sums.

use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;

use super::{Ciphertext, DecryptionKey, EncryptionKey};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockKey {
    key_bits: u64,
    modulus: BigUint,
}

impl MockKey {
    pub fn new(key_bits: u64) -> Result<Self> {
        if key_bits < 2 {
            return Err(Error::invalid("mock key needs at least 2 bits"));
        }
        Ok(Self { key_bits, modulus: BigUint::one() << key_bits })
    }

    fn check(&self, ct: &Ciphertext) -> Result<()> {
        if ct.0 >= self.modulus {
            return Err(Error::MalformedCiphertext);
        }
        Ok(())
    }
}

impl EncryptionKey for MockKey {
    fn capacity_bits(&self) -> u64 {
        self.key_bits - 1
    }

    fn encrypt(&self, m: &BigUint, _rng: &mut dyn RngCore) -> Result<Ciphertext> {
        if m >= &self.modulus {
            return Err(Error::PlaintextTooLarge);
        }
        Ok(Ciphertext(m.clone()))
    }

    fn add(&self, cts: &[Ciphertext]) -> Result<Ciphertext> {
        if cts.is_empty() {
            return Err(Error::EmptyAggregation);
        }
        let mut acc = BigUint::default();
        for ct in cts {
            self.check(ct)?;
            acc += &ct.0;
        }
        Ok(Ciphertext(acc % &self.modulus))
    }
}

impl DecryptionKey for MockKey {
    fn decrypt(&self, ct: &Ciphertext) -> Result<BigUint> {
        self.check(ct)?;
        Ok(ct.0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Purpose};

    #[test]
    fn same_contract_as_paillier() {
        let key = MockKey::new(64).unwrap();
        let mut rng = derive_stream(1, Purpose::Encryption, 0, 0);
        let a = key.encrypt(&BigUint::from(40u32), &mut rng).unwrap();
        let b = key.encrypt(&BigUint::from(2u32), &mut rng).unwrap();
        assert_eq!(key.decrypt(&key.add(&[a, b]).unwrap()).unwrap(), BigUint::from(42u32));
        assert!(key.add(&[]).is_err());
        assert!(key.encrypt(&(BigUint::one() << 64u32), &mut rng).is_err());
        assert!(key.decrypt(&Ciphertext(BigUint::one() << 64u32)).is_err());
        assert_eq!(key.capacity_bits(), 63);
    }
}

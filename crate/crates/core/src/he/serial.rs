//! Binary serialisation of keys and ciphertext bundles.
//!
//! Every big integer is written as a 4-byte big-endian length followed by
//! that many big-endian magnitude bytes (zero is written with length 0).
//! Files start with a 4-byte magic and a 1-byte format version:
//!
//! | magic  | contents                                                        |
//! |--------|-----------------------------------------------------------------|
//! | `FCPK` | `n`, `g`                                                        |
//! | `FCSK` | `n`, `λ`, `μ`                                                   |
//! | `FCCB` | `slot_bits: u32`, `guard_bits: u32`, `slots: u32`, `dimension: u64`, `count: u32`, then `count` ciphertexts |
//!
//! Fixed-width integers are big-endian.

use std::io::{Read, Write};

use num_bigint::BigUint;
use num_traits::Zero;

use super::paillier::{PublicKey, SecretKey};
use super::{Ciphertext, CiphertextBundle, SlotLayout};
use crate::{Error, Result};

pub const FORMAT_VERSION: u8 = 1;
const PUBLIC_MAGIC: &[u8; 4] = b"FCPK";
const SECRET_MAGIC: &[u8; 4] = b"FCSK";
const BUNDLE_MAGIC: &[u8; 4] = b"FCCB";
/// Refuse absurd lengths from corrupt input (1 MiB per integer).
const MAX_INT_BYTES: u32 = 1 << 20;

pub fn write_biguint<W: Write>(w: &mut W, v: &BigUint) -> Result<()> {
    let bytes = if v.is_zero() { Vec::new() } else { v.to_bytes_be() };
    let len = u32::try_from(bytes.len()).map_err(|_| Error::Serialization("integer too large".into()))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_biguint<R: Read>(r: &mut R) -> Result<BigUint> {
    let len = read_u32(r)?;
    if len > MAX_INT_BYTES {
        return Err(Error::Serialization(format!("integer length {len} exceeds limit")));
    }
    let mut bytes = vec![0u8; len as usize];
    read_exact(r, &mut bytes)?;
    Ok(BigUint::from_bytes_be(&bytes))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Serialization("unexpected end of input".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_be_bytes(b))
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&[FORMAT_VERSION])?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut head = [0u8; 5];
    read_exact(r, &mut head)?;
    if &head[..4] != magic {
        return Err(Error::Serialization(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    if head[4] != FORMAT_VERSION {
        return Err(Error::Serialization(format!("unsupported format version {}", head[4])));
    }
    Ok(())
}

pub fn write_public_key<W: Write>(w: &mut W, pk: &PublicKey) -> Result<()> {
    write_header(w, PUBLIC_MAGIC)?;
    write_biguint(w, pk.n())?;
    write_biguint(w, &pk.g())
}

pub fn read_public_key<R: Read>(r: &mut R) -> Result<PublicKey> {
    read_header(r, PUBLIC_MAGIC)?;
    let n = read_biguint(r)?;
    let g = read_biguint(r)?;
    if g != &n + 1u32 {
        return Err(Error::Serialization("generator must be n + 1".into()));
    }
    PublicKey::from_modulus(n)
}

pub fn write_secret_key<W: Write>(w: &mut W, sk: &SecretKey) -> Result<()> {
    write_header(w, SECRET_MAGIC)?;
    write_biguint(w, sk.public().n())?;
    write_biguint(w, sk.lambda())?;
    write_biguint(w, sk.mu())
}

pub fn read_secret_key<R: Read>(r: &mut R) -> Result<SecretKey> {
    read_header(r, SECRET_MAGIC)?;
    let n = read_biguint(r)?;
    let lambda = read_biguint(r)?;
    let mu = read_biguint(r)?;
    Ok(SecretKey::from_parts(PublicKey::from_modulus(n)?, lambda, mu))
}

pub fn write_bundle<W: Write>(w: &mut W, bundle: &CiphertextBundle) -> Result<()> {
    write_header(w, BUNDLE_MAGIC)?;
    let layout = &bundle.layout;
    w.write_all(&layout.slot_bits().to_be_bytes())?;
    w.write_all(&layout.guard_bits().to_be_bytes())?;
    w.write_all(&(layout.slots() as u32).to_be_bytes())?;
    w.write_all(&(bundle.dimension as u64).to_be_bytes())?;
    w.write_all(&(bundle.ciphertexts.len() as u32).to_be_bytes())?;
    for ct in &bundle.ciphertexts {
        write_biguint(w, &ct.0)?;
    }
    Ok(())
}

pub fn read_bundle<R: Read>(r: &mut R) -> Result<CiphertextBundle> {
    read_header(r, BUNDLE_MAGIC)?;
    let slot_bits = read_u32(r)?;
    let guard_bits = read_u32(r)?;
    let slots = read_u32(r)? as usize;
    let dimension = read_u64(r)? as usize;
    let count = read_u32(r)? as usize;
    let layout = SlotLayout::with_slots(slot_bits, guard_bits, slots)?;
    if count != layout.plaintexts_for(dimension) {
        return Err(Error::Serialization(format!(
            "{count} ciphertexts cannot cover dimension {dimension}"
        )));
    }
    let ciphertexts = (0..count).map(|_| read_biguint(r).map(Ciphertext)).collect::<Result<_>>()?;
    Ok(CiphertextBundle { ciphertexts, layout, dimension })
}

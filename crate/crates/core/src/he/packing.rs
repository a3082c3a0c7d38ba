//! Bit-field packing of slot values into big-integer plaintexts.
//!
//! Slot `j` of a plaintext occupies bits `[j·w, (j+1)·w)` with
//! `w = slot_bits + guard_bits`, least significant slot first.

use num_bigint::BigUint;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotLayout {
    slot_bits: u32,
    guard_bits: u32,
    slots: usize,
}

impl SlotLayout {
    /// Fit as many slots as possible into `capacity_bits` plaintext bits.
    pub fn new(slot_bits: u32, guard_bits: u32, capacity_bits: u64) -> Result<Self> {
        let width = slot_bits + guard_bits;
        if slot_bits == 0 || width > 64 {
            return Err(Error::invalid(format!(
                "slot width {slot_bits}+{guard_bits} must be in 1..=64 bits"
            )));
        }
        let slots = (capacity_bits / u64::from(width)) as usize;
        Self::with_slots(slot_bits, guard_bits, slots)
    }

    pub fn with_slots(slot_bits: u32, guard_bits: u32, slots: usize) -> Result<Self> {
        if slot_bits == 0 || slot_bits + guard_bits > 64 {
            return Err(Error::invalid("slot width must be in 1..=64 bits"));
        }
        if slots == 0 {
            return Err(Error::invalid("plaintext capacity is smaller than one slot"));
        }
        Ok(Self { slot_bits, guard_bits, slots })
    }

    pub fn slot_bits(&self) -> u32 {
        self.slot_bits
    }

    pub fn guard_bits(&self) -> u32 {
        self.guard_bits
    }

    pub fn width(&self) -> u32 {
        self.slot_bits + self.guard_bits
    }

    /// Slots per plaintext.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn capacity_bits(&self) -> u64 {
        self.slots as u64 * u64::from(self.width())
    }

    /// Plaintexts needed for `dimension` values.
    pub fn plaintexts_for(&self, dimension: usize) -> usize {
        dimension.div_ceil(self.slots)
    }

    /// Guard bits needed so that `k_max` slot values sum without carry.
    pub fn required_guard_bits(k_max: usize) -> u32 {
        if k_max <= 1 {
            0
        } else {
            usize::BITS - (k_max - 1).leading_zeros()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedPlaintext {
    pub value: BigUint,
    pub slot_bits: u32,
    pub guard_bits: u32,
    /// Slots in use in this plaintext.
    pub slots: usize,
}

struct BitWriter {
    words: Vec<u32>,
    pos: u64,
}

impl BitWriter {
    fn with_bits(bits: u64) -> Self {
        Self { words: vec![0; bits.div_ceil(32) as usize + 2], pos: 0 }
    }

    fn put(&mut self, value: u64, width: u32) {
        let mut v = u128::from(value);
        let mut idx = (self.pos / 32) as usize;
        let shift = (self.pos % 32) as u32;
        v <<= shift;
        let mut remaining = width + shift;
        while remaining > 0 {
            self.words[idx] |= v as u32;
            v >>= 32;
            idx += 1;
            remaining = remaining.saturating_sub(32);
        }
        self.pos += u64::from(width);
    }
}

fn read_bits(words: &[u32], pos: u64, width: u32) -> u64 {
    let idx = (pos / 32) as usize;
    let shift = (pos % 32) as u32;
    let mut acc: u128 = 0;
    for k in 0..3 {
        let w = words.get(idx + k).copied().unwrap_or(0);
        acc |= u128::from(w) << (32 * k);
    }
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    ((acc >> shift) as u64) & mask
}

/// Pack counts (each `< 2^slot_bits`) into plaintexts whose slots can absorb
/// a sum of `k_max` such plaintexts without cross-slot carry.
pub fn pack(counts: &[u64], layout: &SlotLayout, k_max: usize) -> Result<Vec<PackedPlaintext>> {
    let needed = SlotLayout::required_guard_bits(k_max);
    if layout.guard_bits < needed {
        return Err(Error::InsufficientGuardBits { guard_bits: layout.guard_bits, k_max, needed });
    }
    let limit = if layout.slot_bits == 64 { u64::MAX } else { (1u64 << layout.slot_bits) - 1 };
    if let Some(&bad) = counts.iter().find(|&&c| c > limit) {
        return Err(Error::SlotOverflow { count: bad, bits: layout.slot_bits });
    }
    Ok(counts
        .chunks(layout.slots)
        .map(|chunk| {
            let mut w = BitWriter::with_bits(chunk.len() as u64 * u64::from(layout.width()));
            for &c in chunk {
                w.put(c, layout.width());
            }
            PackedPlaintext {
                value: BigUint::new(w.words),
                slot_bits: layout.slot_bits,
                guard_bits: layout.guard_bits,
                slots: chunk.len(),
            }
        })
        .collect())
}

/// Extract `dimension` full-width slot values from plaintext integers.
pub fn unpack(values: &[BigUint], layout: &SlotLayout, dimension: usize) -> Result<Vec<u64>> {
    if values.len() != layout.plaintexts_for(dimension) {
        return Err(Error::LayoutMismatch);
    }
    let width = layout.width();
    let mut out = Vec::with_capacity(dimension);
    for v in values {
        if v.bits() > layout.capacity_bits() {
            return Err(Error::LayoutMismatch);
        }
        let words = v.to_u32_digits();
        let take = layout.slots.min(dimension - out.len());
        for j in 0..take {
            out.push(read_bits(&words, j as u64 * u64::from(width), width));
        }
    }
    Ok(out)
}

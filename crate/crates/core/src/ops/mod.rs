//! Bit-accurate data operations on plain byte slices.
//!
//! The device engine calls these at descriptor completion; they are also the
//! reference the tests check the device against.

pub mod crc;
pub mod delta;
pub mod dif;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crc::{crc16_t10dif, crc32c};
pub use delta::{delta_apply, delta_create, DeltaEntry, DeltaOverflow, DeltaRecord};
pub use dif::{dif_check, dif_insert, dif_strip, dif_update, DifBlockSize, DifField, DifMode, DifParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpError {
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("regions overlap")]
    Overlap,
    #[error("length {len} is not a multiple of {block}")]
    BlockMultiple { len: usize, block: usize },
    #[error("offset out of range")]
    OutOfRange,
    #[error("fill pattern must be 8 or 16 bytes, got {0}")]
    PatternLength(usize),
}

/// An 8- or 16-byte fill pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FillParams {
    bytes: [u8; 16],
    len: u8,
}

impl FillParams {
    pub fn new(pattern: &[u8]) -> Result<Self, OpError> {
        if !matches!(pattern.len(), 8 | 16) {
            return Err(OpError::PatternLength(pattern.len()));
        }
        let mut bytes = [0u8; 16];
        bytes[..pattern.len()].copy_from_slice(pattern);
        Ok(FillParams { bytes, len: pattern.len() as u8 })
    }

    pub fn repeat_byte(b: u8) -> Self {
        FillParams { bytes: [b; 16], len: 8 }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrcParams {
    pub seed: u32,
}

pub fn mem_copy(src: &[u8], dst: &mut [u8]) -> Result<usize, OpError> {
    if src.len() != dst.len() {
        return Err(OpError::LengthMismatch { a: src.len(), b: dst.len() });
    }
    dst.copy_from_slice(src);
    Ok(src.len())
}

/// Copy inside one buffer with memmove semantics.
pub fn mem_move(buf: &mut [u8], src: usize, dst: usize, len: usize) -> Result<usize, OpError> {
    let end = |start: usize| start.checked_add(len).filter(|&e| e <= buf.len());
    if end(src).is_none() || end(dst).is_none() {
        return Err(OpError::OutOfRange);
    }
    buf.copy_within(src..src + len, dst);
    Ok(len)
}

pub fn ranges_overlap(a: std::ops::Range<u64>, b: std::ops::Range<u64>) -> bool {
    !a.is_empty() && !b.is_empty() && a.start < b.end && b.start < a.end
}

pub fn dualcast(src: &[u8], dst1: &mut [u8], dst2: &mut [u8]) -> Result<usize, OpError> {
    if src.len() != dst1.len() || src.len() != dst2.len() {
        return Err(OpError::LengthMismatch { a: src.len(), b: dst1.len().max(dst2.len()) });
    }
    dst1.copy_from_slice(src);
    dst2.copy_from_slice(src);
    Ok(src.len())
}

/// Dualcast where both destinations live in one buffer at offsets `d1`, `d2`.
pub fn dualcast_within(src: &[u8], buf: &mut [u8], d1: usize, d2: usize) -> Result<usize, OpError> {
    let len = src.len() as u64;
    if ranges_overlap(d1 as u64..d1 as u64 + len, d2 as u64..d2 as u64 + len) {
        return Err(OpError::Overlap);
    }
    if d1.max(d2) + src.len() > buf.len() {
        return Err(OpError::OutOfRange);
    }
    buf[d1..d1 + src.len()].copy_from_slice(src);
    buf[d2..d2 + src.len()].copy_from_slice(src);
    Ok(src.len())
}

/// `dst[i] = pattern[i % pattern.len()]`.
pub fn mem_fill(pattern: &FillParams, dst: &mut [u8]) -> usize {
    let pat = pattern.as_bytes();
    for chunk in dst.chunks_mut(pat.len()) {
        chunk.copy_from_slice(&pat[..chunk.len()]);
    }
    dst.len()
}

/// First index where `a` and `b` differ, or `None` when equal.
pub fn mem_compare(a: &[u8], b: &[u8]) -> Result<Option<usize>, OpError> {
    if a.len() != b.len() {
        return Err(OpError::LengthMismatch { a: a.len(), b: b.len() });
    }
    Ok(first_mismatch(a, b))
}

fn first_mismatch(a: &[u8], b: &[u8]) -> Option<usize> {
    // Compare 8 bytes at a time, then locate the byte.
    let words = a.len() / 8;
    for w in 0..words {
        let (x, y) = (&a[w * 8..w * 8 + 8], &b[w * 8..w * 8 + 8]);
        if x != y {
            return x.iter().zip(y).position(|(p, q)| p != q).map(|i| w * 8 + i);
        }
    }
    let tail = words * 8;
    a[tail..].iter().zip(&b[tail..]).position(|(p, q)| p != q).map(|i| tail + i)
}

/// Compares `a` with `pattern` repeated; a trailing partial block is compared
/// with the pattern prefix.
pub fn compare_pattern(pattern: &[u8; 8], a: &[u8]) -> Option<usize> {
    a.chunks(8).enumerate().find_map(|(i, chunk)| {
        chunk.iter().zip(pattern).position(|(x, p)| x != p).map(|j| i * 8 + j)
    })
}

/// CRC-32C over `src`, copying it to `dst` when given.
pub fn crc32_gen(params: CrcParams, src: &[u8], dst: Option<&mut [u8]>) -> Result<u32, OpError> {
    if let Some(dst) = dst {
        mem_copy(src, dst)?;
    }
    Ok(crc32c(params.seed, src))
}

/// Counts bytes evicted by cache flush operations.
#[derive(Debug, Default)]
pub struct FlushCounter(AtomicU64);

impl FlushCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Contents are untouched; only the counter moves.
pub fn cache_flush(dst: &[u8], counter: &FlushCounter) -> usize {
    counter.0.fetch_add(dst.len() as u64, Ordering::Relaxed);
    dst.len()
}

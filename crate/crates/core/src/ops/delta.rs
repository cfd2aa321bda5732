//! Delta records over 8-byte chunks.
//!
//! Each entry is 12 bytes on the wire: a little-endian u32 chunk index
//! followed by the 8 bytes of the modified chunk.

use super::OpError;

pub const DELTA_CHUNK: usize = 8;
pub const DELTA_ENTRY_BYTES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeltaEntry {
    pub chunk: u32,
    pub data: [u8; DELTA_CHUNK],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeltaRecord {
    pub entries: Vec<DeltaEntry>,
}

/// `delta_create` ran out of record space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaOverflow {
    /// Source bytes examined before the entry that did not fit.
    pub bytes_examined: usize,
    /// Entries that did fit.
    pub partial: DeltaRecord,
}

impl DeltaRecord {
    pub fn byte_len(&self) -> usize {
        self.entries.len() * DELTA_ENTRY_BYTES
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        for e in &self.entries {
            out.extend_from_slice(&e.chunk.to_le_bytes());
            out.extend_from_slice(&e.data);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, OpError> {
        if !bytes.len().is_multiple_of(DELTA_ENTRY_BYTES) {
            return Err(OpError::BlockMultiple { len: bytes.len(), block: DELTA_ENTRY_BYTES });
        }
        let entries = bytes
            .chunks_exact(DELTA_ENTRY_BYTES)
            .map(|e| DeltaEntry {
                chunk: u32::from_le_bytes(e[..4].try_into().unwrap()),
                data: e[4..].try_into().unwrap(),
            })
            .collect();
        Ok(DeltaRecord { entries })
    }
}

/// One entry per differing chunk, ascending.
///
/// The outer error is a size-rule violation; the inner one reports overflow
/// of `max_size` record bytes.
pub fn delta_create(
    original: &[u8],
    modified: &[u8],
    max_size: usize,
) -> Result<Result<DeltaRecord, DeltaOverflow>, OpError> {
    if original.len() != modified.len() {
        return Err(OpError::LengthMismatch { a: original.len(), b: modified.len() });
    }
    if !original.len().is_multiple_of(DELTA_CHUNK) {
        return Err(OpError::BlockMultiple { len: original.len(), block: DELTA_CHUNK });
    }
    if original.len() / DELTA_CHUNK > u32::MAX as usize {
        return Err(OpError::OutOfRange);
    }
    let mut record = DeltaRecord::default();
    let pairs = original.chunks_exact(DELTA_CHUNK).zip(modified.chunks_exact(DELTA_CHUNK));
    for (i, (o, m)) in pairs.enumerate() {
        if o == m {
            continue;
        }
        if (record.entries.len() + 1) * DELTA_ENTRY_BYTES > max_size {
            return Ok(Err(DeltaOverflow { bytes_examined: i * DELTA_CHUNK, partial: record }));
        }
        record.entries.push(DeltaEntry { chunk: i as u32, data: m.try_into().unwrap() });
    }
    Ok(Ok(record))
}

/// Writes `original` patched with `delta` into `dst`.
pub fn delta_apply(original: &[u8], delta: &DeltaRecord, dst: &mut [u8]) -> Result<usize, OpError> {
    if original.len() != dst.len() {
        return Err(OpError::LengthMismatch { a: original.len(), b: dst.len() });
    }
    let chunks = original.len() / DELTA_CHUNK;
    if delta.entries.iter().any(|e| e.chunk as usize >= chunks) {
        return Err(OpError::OutOfRange);
    }
    dst.copy_from_slice(original);
    patch_in_place(delta, dst)
}

/// Applies `delta` to a buffer already holding the original contents.
pub fn patch_in_place(delta: &DeltaRecord, buf: &mut [u8]) -> Result<usize, OpError> {
    let chunks = buf.len() / DELTA_CHUNK;
    if delta.entries.iter().any(|e| e.chunk as usize >= chunks) {
        return Err(OpError::OutOfRange);
    }
    for e in &delta.entries {
        let at = e.chunk as usize * DELTA_CHUNK;
        buf[at..at + DELTA_CHUNK].copy_from_slice(&e.data);
    }
    Ok(buf.len())
}

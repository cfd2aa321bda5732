//! T10 data integrity field: an 8-byte tuple after every data block.
//!
//! Tuple layout, big-endian: guard (CRC-16/T10-DIF of the block), 2-byte
//! application tag, 4-byte reference tag. The reference tag of block `i` is
//! `ref_tag_seed + i` modulo 2^32.

use serde::{Deserialize, Serialize};

use super::crc::crc16_t10dif;
use super::OpError;

pub const DIF_TUPLE_BYTES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DifBlockSize {
    B512,
    B520,
    B4096,
    B4104,
}

impl DifBlockSize {
    pub fn code(self) -> u8 {
        match self {
            DifBlockSize::B512 => 0,
            DifBlockSize::B520 => 1,
            DifBlockSize::B4096 => 2,
            DifBlockSize::B4104 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DifBlockSize::B512,
            1 => DifBlockSize::B520,
            2 => DifBlockSize::B4096,
            3 => DifBlockSize::B4104,
            _ => return None,
        })
    }

    /// Payload bytes per block.
    pub fn data_block(self) -> usize {
        match self {
            DifBlockSize::B512 | DifBlockSize::B520 => 512,
            DifBlockSize::B4096 | DifBlockSize::B4104 => 4096,
        }
    }

    /// Payload plus tuple.
    pub fn protected_block(self) -> usize {
        self.data_block() + DIF_TUPLE_BYTES
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DifMode {
    Check,
    Insert,
    Strip,
    Update,
}

impl DifMode {
    pub fn code(self) -> u8 {
        match self {
            DifMode::Check => 0,
            DifMode::Insert => 1,
            DifMode::Strip => 2,
            DifMode::Update => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DifMode::Check,
            1 => DifMode::Insert,
            2 => DifMode::Strip,
            3 => DifMode::Update,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DifParams {
    pub block_size: DifBlockSize,
    pub app_tag: u16,
    pub ref_tag_seed: u32,
    pub mode: DifMode,
}

impl DifParams {
    pub fn new(block_size: DifBlockSize, mode: DifMode, app_tag: u16, ref_tag_seed: u32) -> Self {
        DifParams { block_size, app_tag, ref_tag_seed, mode }
    }

    /// Bytes written to the destination for a source of `src_len` bytes.
    pub fn output_len(&self, src_len: usize) -> usize {
        let data = self.block_size.data_block();
        let prot = self.block_size.protected_block();
        match self.mode {
            DifMode::Insert => src_len / data * prot,
            DifMode::Strip => src_len / prot * data,
            DifMode::Update => src_len,
            DifMode::Check => 0,
        }
    }

    fn tuple(&self, block: &[u8], index: usize) -> [u8; DIF_TUPLE_BYTES] {
        let mut t = [0u8; DIF_TUPLE_BYTES];
        t[0..2].copy_from_slice(&crc16_t10dif(block).to_be_bytes());
        t[2..4].copy_from_slice(&self.app_tag.to_be_bytes());
        t[4..8].copy_from_slice(&self.ref_tag_seed.wrapping_add(index as u32).to_be_bytes());
        t
    }
}

/// Which tuple field failed a check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DifField {
    Guard,
    AppTag,
    RefTag,
}

pub fn dif_insert(params: &DifParams, src: &[u8]) -> Result<Vec<u8>, OpError> {
    let data = params.block_size.data_block();
    if !src.len().is_multiple_of(data) {
        return Err(OpError::BlockMultiple { len: src.len(), block: data });
    }
    let mut out = Vec::with_capacity(src.len() / data * params.block_size.protected_block());
    for (i, block) in src.chunks_exact(data).enumerate() {
        out.extend_from_slice(block);
        out.extend_from_slice(&params.tuple(block, i));
    }
    Ok(out)
}

/// Verifies every tuple. On failure returns the first bad block and field.
pub fn dif_check(params: &DifParams, src: &[u8]) -> Result<Result<(), (usize, DifField)>, OpError> {
    let data = params.block_size.data_block();
    let prot = params.block_size.protected_block();
    if !src.len().is_multiple_of(prot) {
        return Err(OpError::BlockMultiple { len: src.len(), block: prot });
    }
    for (i, block) in src.chunks_exact(prot).enumerate() {
        let (payload, tuple) = block.split_at(data);
        let expect = params.tuple(payload, i);
        if tuple[0..2] != expect[0..2] {
            return Ok(Err((i, DifField::Guard)));
        }
        if tuple[2..4] != expect[2..4] {
            return Ok(Err((i, DifField::AppTag)));
        }
        if tuple[4..8] != expect[4..8] {
            return Ok(Err((i, DifField::RefTag)));
        }
    }
    Ok(Ok(()))
}

pub fn dif_strip(params: &DifParams, src: &[u8]) -> Result<Vec<u8>, OpError> {
    let data = params.block_size.data_block();
    let prot = params.block_size.protected_block();
    if !src.len().is_multiple_of(prot) {
        return Err(OpError::BlockMultiple { len: src.len(), block: prot });
    }
    Ok(src.chunks_exact(prot).flat_map(|b| &b[..data]).copied().collect())
}

/// Rewrites every tuple with the tags in `params`, recomputing guards.
pub fn dif_update(params: &DifParams, src: &[u8]) -> Result<Vec<u8>, OpError> {
    let data = params.block_size.data_block();
    let prot = params.block_size.protected_block();
    if !src.len().is_multiple_of(prot) {
        return Err(OpError::BlockMultiple { len: src.len(), block: prot });
    }
    let mut out = src.to_vec();
    for (i, block) in out.chunks_exact_mut(prot).enumerate() {
        let t = params.tuple(&block[..data], i);
        block[data..].copy_from_slice(&t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u32) -> DifParams {
        DifParams::new(DifBlockSize::B512, DifMode::Insert, 0, seed)
    }

    #[test]
    fn zero_block_zero_tuple() {
        let out = dif_insert(&params(0), &[0u8; 512]).unwrap();
        assert_eq!(out.len(), 520);
        assert_eq!(&out[512..], &[0u8; 8]);
    }

    #[test]
    fn ref_tags_increment() {
        let out = dif_insert(&params(7), &[0u8; 1024]).unwrap();
        assert_eq!(&out[516..520], &7u32.to_be_bytes());
        assert_eq!(&out[1036..1040], &8u32.to_be_bytes());
        let wrap = dif_insert(&params(u32::MAX), &[0u8; 1024]).unwrap();
        assert_eq!(&wrap[1036..1040], &0u32.to_be_bytes());
    }

    #[test]
    fn app_tag_big_endian() {
        let p = DifParams::new(DifBlockSize::B4096, DifMode::Insert, 0x1234, 0);
        let out = dif_insert(&p, &[0xAA; 4096]).unwrap();
        assert_eq!(&out[4098..4100], &[0x12, 0x34]);
    }

    #[test]
    fn size_rules() {
        assert!(matches!(dif_insert(&params(0), &[0u8; 520]), Err(OpError::BlockMultiple { .. })));
        assert!(matches!(dif_check(&params(0), &[0u8; 512]), Err(OpError::BlockMultiple { .. })));
        assert!(matches!(dif_strip(&params(0), &[0u8; 1000]), Err(OpError::BlockMultiple { .. })));
    }

    #[test]
    fn check_reports_field() {
        let p = params(3);
        let mut prot = dif_insert(&p, &[5u8; 1024]).unwrap();
        prot[520 + 515] ^= 1; // app tag of block 1
        assert_eq!(dif_check(&p, &prot).unwrap(), Err((1, DifField::AppTag)));
    }

    #[test]
    fn update_retags() {
        let src: Vec<u8> = (0..1024u32).map(|i| i as u8).collect();
        let prot = dif_insert(&params(1), &src).unwrap();
        let newp = DifParams::new(DifBlockSize::B520, DifMode::Update, 9, 100);
        let updated = dif_update(&newp, &prot).unwrap();
        assert_eq!(dif_check(&newp, &updated).unwrap(), Ok(()));
        assert_eq!(dif_strip(&newp, &updated).unwrap(), src);
        assert!(dif_check(&params(1), &updated).unwrap().is_err());
    }
}

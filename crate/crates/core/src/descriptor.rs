//! Work descriptors, batch descriptors and completion records.
//!
//! Every request to the device is a 64-byte little-endian descriptor:
//!
//! ```text
//! bytes  0..4   flags (bits 0-3 flags, 4-11 reserved, 12-31 client id)
//! byte   4      opcode
//! bytes  5..8   reserved, zero
//! bytes  8..16  completion record address
//! bytes 16..24  source address
//! bytes 24..32  destination address
//! bytes 32..40  transfer size
//! bytes 40..64  opcode-specific parameters
//! ```
//!
//! A batch descriptor uses the same layout with the batch opcode, the
//! descriptor array address in the source field and the descriptor count in
//! the transfer size field.

use std::fmt;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DeviceConfig;
use crate::ops::delta::DELTA_ENTRY_BYTES;
use crate::ops::dif::{DifBlockSize, DifMode, DifParams};
use crate::ops::{CrcParams, FillParams};

pub const DESCRIPTOR_BYTES: usize = 64;

/// Largest client id representable in the flags word.
pub const MAX_CLIENT_ID: u32 = (1 << 20) - 1;

const CLIENT_ID_SHIFT: u32 = 12;
const RESERVED_FLAG_MASK: u32 = 0x0000_0FF0;

/// Identifies one buffer in the emulated address space. Id 0 is never mapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BufferId(pub u32);

impl BufferId {
    /// Buffer id reserved for completion-record slots.
    pub const COMPLETION: BufferId = BufferId(u32::MAX);
}

/// A (buffer, byte offset) handle packed into 64 bits.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address(u64);

impl Address {
    pub const NULL: Address = Address(0);

    pub fn new(buffer: BufferId, offset: u32) -> Self {
        Address(((buffer.0 as u64) << 32) | offset as u64)
    }

    pub fn from_raw(raw: u64) -> Self {
        Address(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn buffer(self) -> BufferId {
        BufferId((self.0 >> 32) as u32)
    }

    pub fn offset(self) -> u32 {
        self.0 as u32
    }

    pub fn is_null(self) -> bool {
        self.buffer().0 == 0
    }

    /// Address `by` bytes further into the same buffer, if it still fits.
    pub fn add(self, by: u64) -> Option<Address> {
        let off = (self.offset() as u64).checked_add(by)?;
        u32::try_from(off).ok().map(|o| Address::new(self.buffer(), o))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            write!(f, "Address(null)")
        } else {
            write!(f, "Address({}+{:#x})", self.buffer().0, self.offset())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    Batch = 0x01,
    MemCopy = 0x03,
    MemFill = 0x04,
    Compare = 0x05,
    ComparePattern = 0x06,
    CreateDelta = 0x07,
    ApplyDelta = 0x08,
    Dualcast = 0x09,
    CrcGen = 0x10,
    Dif = 0x11,
    CacheFlush = 0x20,
}

impl Opcode {
    /// The ten data operations, in table order.
    pub const DATA_OPS: [Opcode; 10] = [
        Opcode::MemCopy,
        Opcode::Dualcast,
        Opcode::CrcGen,
        Opcode::Dif,
        Opcode::MemFill,
        Opcode::Compare,
        Opcode::ComparePattern,
        Opcode::CreateDelta,
        Opcode::ApplyDelta,
        Opcode::CacheFlush,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x01 => Opcode::Batch,
            0x03 => Opcode::MemCopy,
            0x04 => Opcode::MemFill,
            0x05 => Opcode::Compare,
            0x06 => Opcode::ComparePattern,
            0x07 => Opcode::CreateDelta,
            0x08 => Opcode::ApplyDelta,
            0x09 => Opcode::Dualcast,
            0x10 => Opcode::CrcGen,
            0x11 => Opcode::Dif,
            0x20 => Opcode::CacheFlush,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Batch => "batch",
            Opcode::MemCopy => "memcpy",
            Opcode::MemFill => "fill",
            Opcode::Compare => "compare",
            Opcode::ComparePattern => "compare_pattern",
            Opcode::CreateDelta => "create_delta",
            Opcode::ApplyDelta => "apply_delta",
            Opcode::Dualcast => "dualcast",
            Opcode::CrcGen => "crc",
            Opcode::Dif => "dif",
            Opcode::CacheFlush => "flush",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Opcode::DATA_OPS
            .into_iter()
            .chain([Opcode::Batch])
            .find(|op| op.name() == name)
    }

    /// Whether the operation streams data out of its source region.
    pub fn reads_source(self) -> bool {
        !matches!(self, Opcode::MemFill | Opcode::Batch)
    }

    /// Whether the operation writes a destination region.
    pub fn writes_destination(self) -> bool {
        matches!(
            self,
            Opcode::MemCopy
                | Opcode::MemFill
                | Opcode::Dualcast
                | Opcode::ApplyDelta
                | Opcode::Dif
                | Opcode::CrcGen
                | Opcode::CreateDelta
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

bitflags! {
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
    pub struct Flags: u32 {
        const REQUEST_COMPLETION = 1 << 0;
        /// Steer destination writes toward the cache (1) or memory (0).
        const CACHE_CONTROL = 1 << 1;
        /// Inside a batch, do not start until every earlier descriptor is done.
        const FENCE = 1 << 2;
        /// Report compare mismatches as a failing status.
        const CHECK_RESULT = 1 << 3;
    }
}

/// Opcode-specific parameters stored in bytes 40..64.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum OpParams {
    #[default]
    None,
    Fill(FillParams),
    Pattern([u8; 8]),
    Crc(CrcParams),
    Dif(DifParams),
    Dualcast { dst2: Address },
    CreateDelta { record: Address, max_size: u32 },
    ApplyDelta { record: Address, record_size: u32 },
}

/// One offload request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkDescriptor {
    pub opcode: Opcode,
    pub flags: Flags,
    /// Submitter identity, 20 bits.
    pub client_id: u32,
    pub src: Address,
    pub dst: Address,
    pub transfer_size: u64,
    pub completion: Address,
    pub params: OpParams,
}

impl WorkDescriptor {
    /// A descriptor with every field zero apart from the opcode.
    pub fn new(opcode: Opcode) -> Self {
        WorkDescriptor {
            opcode,
            flags: Flags::empty(),
            client_id: 0,
            src: Address::NULL,
            dst: Address::NULL,
            transfer_size: 0,
            completion: Address::NULL,
            params: OpParams::None,
        }
    }

    pub fn copy(src: Address, dst: Address, len: u64) -> Self {
        WorkDescriptor { src, dst, transfer_size: len, ..Self::new(Opcode::MemCopy) }
    }

    pub fn fill(pattern: FillParams, dst: Address, len: u64) -> Self {
        WorkDescriptor {
            dst,
            transfer_size: len,
            params: OpParams::Fill(pattern),
            ..Self::new(Opcode::MemFill)
        }
    }

    pub fn compare(a: Address, b: Address, len: u64) -> Self {
        WorkDescriptor { src: a, dst: b, transfer_size: len, ..Self::new(Opcode::Compare) }
    }

    pub fn compare_pattern(pattern: [u8; 8], src: Address, len: u64) -> Self {
        WorkDescriptor {
            src,
            transfer_size: len,
            params: OpParams::Pattern(pattern),
            ..Self::new(Opcode::ComparePattern)
        }
    }

    /// CRC over `src`; when `dst` is non-null the source is also copied there.
    pub fn crc(seed: u32, src: Address, dst: Address, len: u64) -> Self {
        WorkDescriptor {
            src,
            dst,
            transfer_size: len,
            params: OpParams::Crc(CrcParams { seed }),
            ..Self::new(Opcode::CrcGen)
        }
    }

    pub fn dualcast(src: Address, dst1: Address, dst2: Address, len: u64) -> Self {
        WorkDescriptor {
            src,
            dst: dst1,
            transfer_size: len,
            params: OpParams::Dualcast { dst2 },
            ..Self::new(Opcode::Dualcast)
        }
    }

    /// `transfer_size` is the source length (bare or protected, depending on mode).
    pub fn dif(params: DifParams, src: Address, dst: Address, len: u64) -> Self {
        WorkDescriptor {
            src,
            dst,
            transfer_size: len,
            params: OpParams::Dif(params),
            ..Self::new(Opcode::Dif)
        }
    }

    pub fn create_delta(
        original: Address,
        modified: Address,
        len: u64,
        record: Address,
        max_size: u32,
    ) -> Self {
        WorkDescriptor {
            src: original,
            dst: modified,
            transfer_size: len,
            params: OpParams::CreateDelta { record, max_size },
            ..Self::new(Opcode::CreateDelta)
        }
    }

    pub fn apply_delta(
        original: Address,
        dst: Address,
        len: u64,
        record: Address,
        record_size: u32,
    ) -> Self {
        WorkDescriptor {
            src: original,
            dst,
            transfer_size: len,
            params: OpParams::ApplyDelta { record, record_size },
            ..Self::new(Opcode::ApplyDelta)
        }
    }

    pub fn cache_flush(dst: Address, len: u64) -> Self {
        WorkDescriptor { dst, transfer_size: len, ..Self::new(Opcode::CacheFlush) }
    }

    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.flags |= flags;
        self
    }

    pub fn with_completion(mut self, completion: Address) -> Self {
        self.completion = completion;
        self.flags |= Flags::REQUEST_COMPLETION;
        self
    }

    pub fn with_client(mut self, client_id: u32) -> Self {
        self.client_id = client_id;
        self
    }

    pub fn is_batch(&self) -> bool {
        self.opcode == Opcode::Batch
    }

    pub fn wants_completion(&self) -> bool {
        self.flags.contains(Flags::REQUEST_COMPLETION)
    }

    pub fn serialize(&self) -> Result<[u8; DESCRIPTOR_BYTES], DescriptorError> {
        serialize(self)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, DescriptorError> {
        deserialize(bytes)
    }
}

/// Points at a contiguous array of serialized work descriptors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchDescriptor {
    pub desc_array: Address,
    pub count: u32,
    pub completion: Address,
    pub flags: Flags,
    pub client_id: u32,
}

impl BatchDescriptor {
    pub fn new(desc_array: Address, count: u32, completion: Address) -> Self {
        let flags = if completion.is_null() { Flags::empty() } else { Flags::REQUEST_COMPLETION };
        BatchDescriptor { desc_array, count, completion, flags, client_id: 0 }
    }

    pub fn to_work_descriptor(&self) -> WorkDescriptor {
        WorkDescriptor {
            opcode: Opcode::Batch,
            flags: self.flags,
            client_id: self.client_id,
            src: self.desc_array,
            dst: Address::NULL,
            transfer_size: self.count as u64,
            completion: self.completion,
            params: OpParams::None,
        }
    }
}

impl TryFrom<&WorkDescriptor> for BatchDescriptor {
    type Error = DescriptorError;

    fn try_from(d: &WorkDescriptor) -> Result<Self, Self::Error> {
        if d.opcode != Opcode::Batch {
            return Err(DescriptorError::NotBatch);
        }
        let count = u32::try_from(d.transfer_size).map_err(|_| DescriptorError::Unrepresentable("batch count"))?;
        Ok(BatchDescriptor {
            desc_array: d.src,
            count,
            completion: d.completion,
            flags: d.flags,
            client_id: d.client_id,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    #[default]
    None,
    Success,
    PartialPageFault,
    InvalidDescriptor,
    CompareMismatch,
    DifError,
    DeltaOverflow,
    /// Batch sub-descriptor skipped because a fenced predecessor failed.
    Abandoned,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::None
    }

    pub fn is_success(self) -> bool {
        self == Status::Success
    }
}

/// Written by the device exactly once per descriptor that asks for it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub status: Status,
    pub bytes_completed: u64,
    /// CRC value, compare mismatch flag, delta size, or failing DIF block.
    pub result: u64,
    pub fault_addr: Option<Address>,
    /// Simulated completion time in ns.
    pub timestamp_done: f64,
    /// Device-assigned id of the descriptor this record belongs to.
    pub desc_id: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("descriptor must be {DESCRIPTOR_BYTES} bytes, got {0}")]
    Length(usize),
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("reserved bits set at byte {0}")]
    Reserved(usize),
    #[error("client id {0} exceeds 20 bits")]
    ClientId(u32),
    #[error("parameters do not match opcode {0}")]
    ParamMismatch(Opcode),
    #[error("{0} is not representable in the descriptor layout")]
    Unrepresentable(&'static str),
    #[error("invalid parameter encoding: {0}")]
    BadParam(&'static str),
    #[error("not a batch descriptor")]
    NotBatch,
}

/// A validation rule a descriptor breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("transfer size exceeds the device maximum")]
    TransferSize,
    #[error("completion requested without a completion address")]
    CompletionAddress,
    #[error("batch count outside [2, max_batch_size]")]
    BatchCount,
    #[error("batch descriptors cannot be nested")]
    NestedBatch,
    #[error("required {0} address is null")]
    MissingAddress(&'static str),
    #[error("parameters do not match the opcode")]
    ParamMismatch,
    #[error("fill pattern must be 8 or 16 bytes")]
    PatternLength,
    #[error("transfer size is not a multiple of the DIF block size")]
    DifBlockMultiple,
    #[error("delta buffers must be a multiple of 8 bytes")]
    DeltaAlignment,
    #[error("delta record size is not a whole number of entries")]
    DeltaRecordSize,
    #[error("destination regions overlap")]
    Overlap,
    #[error("client id exceeds 20 bits")]
    ClientId,
}

pub type ValidationResult = Result<(), Violation>;

fn regions_overlap(a: Address, b: Address, len: u64) -> bool {
    a.buffer() == b.buffer() && {
        let (a0, b0) = (a.offset() as u64, b.offset() as u64);
        len > 0 && a0 < b0 + len && b0 < a0 + len
    }
}

/// Checks `desc` against the device limits and the per-opcode rules.
///
/// Pure: returns the first rule broken, in the order listed here.
pub fn validate(desc: &WorkDescriptor, cfg: &DeviceConfig) -> ValidationResult {
    if desc.client_id > MAX_CLIENT_ID {
        return Err(Violation::ClientId);
    }
    if desc.wants_completion() && desc.completion.is_null() {
        return Err(Violation::CompletionAddress);
    }
    if desc.opcode == Opcode::Batch {
        if desc.transfer_size < 2 || desc.transfer_size > cfg.max_batch_size as u64 {
            return Err(Violation::BatchCount);
        }
        if desc.src.is_null() {
            return Err(Violation::MissingAddress("descriptor array"));
        }
        return match desc.params {
            OpParams::None => Ok(()),
            _ => Err(Violation::ParamMismatch),
        };
    }
    if desc.transfer_size > cfg.max_transfer_size {
        return Err(Violation::TransferSize);
    }
    let ts = desc.transfer_size;
    let need = |addr: Address, what: &'static str| {
        if addr.is_null() {
            Err(Violation::MissingAddress(what))
        } else {
            Ok(())
        }
    };
    match (desc.opcode, &desc.params) {
        (Opcode::MemCopy, OpParams::None) => {
            need(desc.src, "source")?;
            need(desc.dst, "destination")
        }
        (Opcode::MemFill, OpParams::Fill(p)) => {
            if !matches!(p.len(), 8 | 16) {
                return Err(Violation::PatternLength);
            }
            need(desc.dst, "destination")
        }
        (Opcode::Compare, OpParams::None) => {
            need(desc.src, "source")?;
            need(desc.dst, "second source")
        }
        (Opcode::ComparePattern, OpParams::Pattern(_)) => need(desc.src, "source"),
        (Opcode::CrcGen, OpParams::Crc(_)) => need(desc.src, "source"),
        (Opcode::Dualcast, OpParams::Dualcast { dst2 }) => {
            need(desc.src, "source")?;
            need(desc.dst, "destination")?;
            need(*dst2, "second destination")?;
            if regions_overlap(desc.dst, *dst2, ts) {
                return Err(Violation::Overlap);
            }
            Ok(())
        }
        (Opcode::Dif, OpParams::Dif(p)) => {
            need(desc.src, "source")?;
            if p.mode != DifMode::Check {
                need(desc.dst, "destination")?;
            }
            let unit = match p.mode {
                DifMode::Insert => p.block_size.data_block(),
                _ => p.block_size.protected_block(),
            };
            if !ts.is_multiple_of(unit as u64) {
                return Err(Violation::DifBlockMultiple);
            }
            Ok(())
        }
        (Opcode::CreateDelta, OpParams::CreateDelta { record, .. }) => {
            need(desc.src, "original")?;
            need(desc.dst, "modified")?;
            need(*record, "delta record")?;
            if !ts.is_multiple_of(8) {
                return Err(Violation::DeltaAlignment);
            }
            Ok(())
        }
        (Opcode::ApplyDelta, OpParams::ApplyDelta { record, record_size }) => {
            need(desc.src, "original")?;
            need(desc.dst, "destination")?;
            if !ts.is_multiple_of(8) {
                return Err(Violation::DeltaAlignment);
            }
            if !(*record_size as usize).is_multiple_of(DELTA_ENTRY_BYTES) {
                return Err(Violation::DeltaRecordSize);
            }
            if *record_size > 0 {
                need(*record, "delta record")?;
            }
            Ok(())
        }
        (Opcode::CacheFlush, OpParams::None) => need(desc.dst, "destination"),
        _ => Err(Violation::ParamMismatch),
    }
}

fn put_u64(out: &mut [u8], at: usize, v: u64) {
    out[at..at + 8].copy_from_slice(&v.to_le_bytes());
}

fn get_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn get_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Encodes `desc` into the fixed 64-byte layout.
pub fn serialize(desc: &WorkDescriptor) -> Result<[u8; DESCRIPTOR_BYTES], DescriptorError> {
    if desc.client_id > MAX_CLIENT_ID {
        return Err(DescriptorError::ClientId(desc.client_id));
    }
    let mut out = [0u8; DESCRIPTOR_BYTES];
    let word = desc.flags.bits() | (desc.client_id << CLIENT_ID_SHIFT);
    out[0..4].copy_from_slice(&word.to_le_bytes());
    out[4] = desc.opcode.code();
    put_u64(&mut out, 8, desc.completion.raw());
    put_u64(&mut out, 16, desc.src.raw());
    put_u64(&mut out, 24, desc.dst.raw());
    put_u64(&mut out, 32, desc.transfer_size);

    let p = &mut out[40..64];
    match (desc.opcode, &desc.params) {
        (Opcode::Batch | Opcode::MemCopy | Opcode::Compare | Opcode::CacheFlush, OpParams::None) => {}
        (Opcode::MemFill, OpParams::Fill(f)) => {
            let pat = f.as_bytes();
            if !matches!(pat.len(), 8 | 16) {
                return Err(DescriptorError::Unrepresentable("fill pattern length"));
            }
            p[..pat.len()].copy_from_slice(pat);
            p[16] = pat.len() as u8;
        }
        (Opcode::ComparePattern, OpParams::Pattern(pat)) => p[..8].copy_from_slice(pat),
        (Opcode::CrcGen, OpParams::Crc(c)) => p[..4].copy_from_slice(&c.seed.to_le_bytes()),
        (Opcode::Dif, OpParams::Dif(d)) => {
            p[0] = d.block_size.code();
            p[1] = d.mode.code();
            p[2..4].copy_from_slice(&d.app_tag.to_le_bytes());
            p[4..8].copy_from_slice(&d.ref_tag_seed.to_le_bytes());
        }
        (Opcode::Dualcast, OpParams::Dualcast { dst2 }) => put_u64(p, 0, dst2.raw()),
        (Opcode::CreateDelta, OpParams::CreateDelta { record, max_size }) => {
            put_u64(p, 0, record.raw());
            p[8..12].copy_from_slice(&max_size.to_le_bytes());
        }
        (Opcode::ApplyDelta, OpParams::ApplyDelta { record, record_size }) => {
            put_u64(p, 0, record.raw());
            p[8..12].copy_from_slice(&record_size.to_le_bytes());
        }
        (op, _) => return Err(DescriptorError::ParamMismatch(op)),
    }
    Ok(out)
}

fn require_zero(b: &[u8], range: std::ops::Range<usize>) -> Result<(), DescriptorError> {
    match b[range.clone()].iter().position(|&x| x != 0) {
        Some(i) => Err(DescriptorError::Reserved(range.start + i)),
        None => Ok(()),
    }
}

/// Decodes a 64-byte descriptor, rejecting unknown opcodes and nonzero reserved bytes.
pub fn deserialize(bytes: &[u8]) -> Result<WorkDescriptor, DescriptorError> {
    if bytes.len() != DESCRIPTOR_BYTES {
        return Err(DescriptorError::Length(bytes.len()));
    }
    let word = get_u32(bytes, 0);
    if word & RESERVED_FLAG_MASK != 0 {
        return Err(DescriptorError::Reserved(0));
    }
    let flags = Flags::from_bits_truncate(word);
    let client_id = word >> CLIENT_ID_SHIFT;
    let opcode = Opcode::from_code(bytes[4]).ok_or(DescriptorError::UnknownOpcode(bytes[4]))?;
    require_zero(bytes, 5..8)?;

    let p = &bytes[40..64];
    let params = match opcode {
        Opcode::Batch | Opcode::MemCopy | Opcode::Compare | Opcode::CacheFlush => {
            require_zero(bytes, 40..64)?;
            OpParams::None
        }
        Opcode::MemFill => {
            let len = p[16] as usize;
            if !matches!(len, 8 | 16) {
                return Err(DescriptorError::BadParam("fill pattern length"));
            }
            require_zero(bytes, 40 + len..56)?;
            require_zero(bytes, 57..64)?;
            OpParams::Fill(FillParams::new(&p[..len]).expect("length checked"))
        }
        Opcode::ComparePattern => {
            require_zero(bytes, 48..64)?;
            OpParams::Pattern(p[..8].try_into().unwrap())
        }
        Opcode::CrcGen => {
            require_zero(bytes, 44..64)?;
            OpParams::Crc(CrcParams { seed: get_u32(p, 0) })
        }
        Opcode::Dif => {
            require_zero(bytes, 48..64)?;
            let block_size =
                DifBlockSize::from_code(p[0]).ok_or(DescriptorError::BadParam("dif block size"))?;
            let mode = DifMode::from_code(p[1]).ok_or(DescriptorError::BadParam("dif mode"))?;
            OpParams::Dif(DifParams {
                block_size,
                mode,
                app_tag: u16::from_le_bytes([p[2], p[3]]),
                ref_tag_seed: get_u32(p, 4),
            })
        }
        Opcode::Dualcast => {
            require_zero(bytes, 48..64)?;
            OpParams::Dualcast { dst2: Address::from_raw(get_u64(p, 0)) }
        }
        Opcode::CreateDelta => {
            require_zero(bytes, 52..64)?;
            OpParams::CreateDelta { record: Address::from_raw(get_u64(p, 0)), max_size: get_u32(p, 8) }
        }
        Opcode::ApplyDelta => {
            require_zero(bytes, 52..64)?;
            OpParams::ApplyDelta {
                record: Address::from_raw(get_u64(p, 0)),
                record_size: get_u32(p, 8),
            }
        }
    };

    Ok(WorkDescriptor {
        opcode,
        flags,
        client_id,
        src: Address::from_raw(get_u64(bytes, 16)),
        dst: Address::from_raw(get_u64(bytes, 24)),
        transfer_size: get_u64(bytes, 32),
        completion: Address::from_raw(get_u64(bytes, 8)),
        params,
    })
}

//! Runs a dispatched descriptor's data operation against the address space.

use crate::descriptor::{Address, Flags, OpParams, Opcode, Status, WorkDescriptor};
use crate::memory::AddressSpace;
use crate::ops::{self, DeltaRecord, DifMode};

/// What an executed descriptor did.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Outcome {
    pub status: Status,
    pub bytes_completed: u64,
    pub result: u64,
    pub fault_addr: Option<Address>,
    pub read: u64,
    pub written: u64,
    pub flushed: u64,
}

impl Outcome {
    fn ok(bytes: u64) -> Self {
        Outcome {
            status: Status::Success,
            bytes_completed: bytes,
            result: 0,
            fault_addr: None,
            read: 0,
            written: 0,
            flushed: 0,
        }
    }

    pub(crate) fn of_status(status: Status) -> Self {
        Outcome { status, ..Outcome::ok(0) }
    }

    fn fault(addr: Address, done: u64) -> Self {
        Outcome { fault_addr: Some(addr), ..Outcome::of_status(Status::PartialPageFault) }.with_bytes(done)
    }

    /// Result assumed for a descriptor when data motion is switched off.
    pub(crate) fn assumed(d: &WorkDescriptor) -> Self {
        let ts = d.transfer_size;
        let written = if d.opcode.writes_destination() { ts } else { 0 };
        let flushed = if d.opcode == Opcode::CacheFlush { ts } else { 0 };
        Outcome { flushed, ..Outcome::ok(ts) }.rw(if d.opcode.reads_source() { ts } else { 0 }, written)
    }

    fn with_bytes(mut self, b: u64) -> Self {
        self.bytes_completed = b;
        self
    }

    fn rw(mut self, read: u64, written: u64) -> Self {
        self.read = read;
        self.written = written;
        self
    }
}

macro_rules! region {
    ($mem:expr, $addr:expr, $len:expr) => {
        match $mem.region($addr, $len) {
            Ok(r) => r,
            Err(at) => return Outcome::fault(at, 0),
        }
    };
}

/// First unmapped byte across `regions`, with the length of the common
/// mapped prefix.
fn linear_fault(mem: &AddressSpace, regions: &[Address], len: u64) -> Option<(Address, u64)> {
    let prefix = regions.iter().map(|&a| mem.valid_prefix(a, len)).min()?;
    if prefix == len {
        return None;
    }
    let first = regions.iter().find(|&&a| mem.valid_prefix(a, len) == prefix)?;
    Some((first.add(prefix).unwrap_or(*first), prefix))
}

fn write_or_fault(mem: &mut AddressSpace, dst: Address, data: &[u8]) -> Result<(), Outcome> {
    mem.region_mut(dst, data.len() as u64)
        .map(|r| r.copy_from_slice(data))
        .map_err(|at| Outcome::fault(at, 0))
}

pub(crate) fn execute(d: &WorkDescriptor, mem: &mut AddressSpace) -> Outcome {
    let ts = d.transfer_size;
    match (d.opcode, &d.params) {
        (Opcode::MemCopy, _) => {
            let (len, fault) = match linear_fault(mem, &[d.src, d.dst], ts) {
                Some((at, n)) => (n, Some(at)),
                None => (ts, None),
            };
            if d.src.buffer() == d.dst.buffer() {
                let buf = mem.buffer_mut(d.src.buffer()).expect("prefix checked");
                ops::mem_move(buf, d.src.offset() as usize, d.dst.offset() as usize, len as usize)
                    .expect("prefix checked");
            } else {
                let src = mem.read(d.src, len).expect("prefix checked");
                mem.write(d.dst, &src).expect("prefix checked");
            }
            let out = match fault {
                Some(at) => Outcome::fault(at, len),
                None => Outcome::ok(len),
            };
            out.rw(len, len)
        }
        (Opcode::MemFill, OpParams::Fill(p)) => {
            let (len, fault) = match linear_fault(mem, &[d.dst], ts) {
                Some((at, n)) => (n, Some(at)),
                None => (ts, None),
            };
            ops::mem_fill(p, mem.region_mut(d.dst, len).expect("prefix checked"));
            let out = match fault {
                Some(at) => Outcome::fault(at, len),
                None => Outcome::ok(len),
            };
            out.rw(0, len)
        }
        (Opcode::Dualcast, OpParams::Dualcast { dst2 }) => {
            let (len, fault) = match linear_fault(mem, &[d.src, d.dst, *dst2], ts) {
                Some((at, n)) => (n, Some(at)),
                None => (ts, None),
            };
            let src = mem.read(d.src, len).expect("prefix checked");
            mem.write(d.dst, &src).expect("prefix checked");
            mem.write(*dst2, &src).expect("prefix checked");
            let out = match fault {
                Some(at) => Outcome::fault(at, len),
                None => Outcome::ok(len),
            };
            out.rw(len, 2 * len)
        }
        (Opcode::CacheFlush, _) => match linear_fault(mem, &[d.dst], ts) {
            Some((at, n)) => Outcome { flushed: n, ..Outcome::fault(at, n) },
            None => Outcome { flushed: ts, ..Outcome::ok(ts) },
        },
        (Opcode::Compare, _) => {
            let a = region!(mem, d.src, ts);
            let b = region!(mem, d.dst, ts);
            let diff = ops::mem_compare(a, b).expect("equal lengths");
            compare_outcome(d, diff).rw(2 * ts, 0)
        }
        (Opcode::ComparePattern, OpParams::Pattern(p)) => {
            let a = region!(mem, d.src, ts);
            compare_outcome(d, ops::compare_pattern(p, a)).rw(ts, 0)
        }
        (Opcode::CrcGen, OpParams::Crc(p)) => {
            let src = region!(mem, d.src, ts).to_vec();
            let crc = ops::crc32c(p.seed, &src);
            let mut written = 0;
            if !d.dst.is_null() {
                if let Err(o) = write_or_fault(mem, d.dst, &src) {
                    return o;
                }
                written = ts;
            }
            Outcome { result: crc as u64, ..Outcome::ok(ts) }.rw(ts, written)
        }
        (Opcode::Dif, OpParams::Dif(p)) => {
            let src = region!(mem, d.src, ts);
            let produced = match p.mode {
                DifMode::Check => match ops::dif_check(p, src) {
                    Ok(Ok(())) => return Outcome::ok(ts).rw(ts, 0),
                    Ok(Err((block, _))) => {
                        let done = (block * p.block_size.protected_block()) as u64;
                        return Outcome { result: block as u64, ..Outcome::of_status(Status::DifError) }
                            .with_bytes(done)
                            .rw(done, 0);
                    }
                    Err(_) => return Outcome::of_status(Status::InvalidDescriptor),
                },
                DifMode::Insert => ops::dif_insert(p, src),
                DifMode::Strip => ops::dif_strip(p, src),
                DifMode::Update => ops::dif_update(p, src),
            };
            let Ok(out) = produced else {
                return Outcome::of_status(Status::InvalidDescriptor);
            };
            if let Err(o) = write_or_fault(mem, d.dst, &out) {
                return o;
            }
            Outcome::ok(ts).rw(ts, out.len() as u64)
        }
        (Opcode::CreateDelta, OpParams::CreateDelta { record, max_size }) => {
            let a = region!(mem, d.src, ts);
            let b = region!(mem, d.dst, ts);
            let (rec, overflow) = match ops::delta_create(a, b, *max_size as usize) {
                Ok(Ok(rec)) => (rec, None),
                Ok(Err(over)) => (over.partial, Some(over.bytes_examined)),
                Err(_) => return Outcome::of_status(Status::InvalidDescriptor),
            };
            let bytes = rec.to_bytes();
            if let Err(o) = write_or_fault(mem, *record, &bytes) {
                return o;
            }
            let size = bytes.len() as u64;
            match overflow {
                None => Outcome { result: size, ..Outcome::ok(ts) }.rw(2 * ts, size),
                Some(examined) => Outcome { result: size, ..Outcome::of_status(Status::DeltaOverflow) }
                    .with_bytes(examined as u64)
                    .rw(2 * examined as u64, size),
            }
        }
        (Opcode::ApplyDelta, OpParams::ApplyDelta { record, record_size }) => {
            let rec_bytes = region!(mem, *record, *record_size as u64);
            let Ok(rec) = DeltaRecord::from_bytes(rec_bytes) else {
                return Outcome::of_status(Status::InvalidDescriptor);
            };
            let original = region!(mem, d.src, ts).to_vec();
            let mut out = vec![0u8; original.len()];
            if ops::delta_apply(&original, &rec, &mut out).is_err() {
                return Outcome::of_status(Status::InvalidDescriptor);
            }
            if let Err(o) = write_or_fault(mem, d.dst, &out) {
                return o;
            }
            Outcome::ok(ts).rw(ts + *record_size as u64, ts)
        }
        _ => Outcome::of_status(Status::InvalidDescriptor),
    }
}

fn compare_outcome(d: &WorkDescriptor, diff: Option<usize>) -> Outcome {
    match diff {
        None => Outcome::ok(d.transfer_size),
        Some(i) => {
            let status = if d.flags.contains(Flags::CHECK_RESULT) {
                Status::CompareMismatch
            } else {
                Status::Success
            };
            Outcome { result: 1, ..Outcome::of_status(status) }.with_bytes(i as u64)
        }
    }
}

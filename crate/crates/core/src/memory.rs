//! Emulated host address space: tier-tagged byte buffers addressed by
//! (buffer id, offset).

use std::collections::HashMap;

use thiserror::Error;

use crate::config::Tier;
use crate::descriptor::{Address, BufferId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("access to unmapped address {0:?}")]
    Unmapped(Address),
    #[error("buffer length {0} exceeds the 4 GiB buffer limit")]
    TooLarge(u64),
}

#[derive(Debug)]
struct Buffer {
    data: Vec<u8>,
    tier: Tier,
}

#[derive(Debug)]
pub struct AddressSpace {
    buffers: HashMap<u32, Buffer>,
    next_id: u32,
}

impl Default for AddressSpace {
    fn default() -> Self {
        AddressSpace { buffers: HashMap::new(), next_id: 1 }
    }
}

impl AddressSpace {
    pub fn alloc(&mut self, len: u64, tier: Tier) -> Result<BufferId, MemoryError> {
        if len > u32::MAX as u64 {
            return Err(MemoryError::TooLarge(len));
        }
        let id = self.next_id;
        self.next_id = self.next_id.checked_add(1).filter(|&n| n != BufferId::COMPLETION.0).unwrap_or(1);
        self.buffers.insert(id, Buffer { data: vec![0; len as usize], tier });
        Ok(BufferId(id))
    }

    pub fn free(&mut self, id: BufferId) -> bool {
        self.buffers.remove(&id.0).is_some()
    }

    pub fn tier(&self, id: BufferId) -> Option<Tier> {
        self.buffers.get(&id.0).map(|b| b.tier)
    }

    pub fn len(&self, id: BufferId) -> Option<u64> {
        self.buffers.get(&id.0).map(|b| b.data.len() as u64)
    }

    pub fn buffer_count(&self) -> usize {
        self.buffers.len()
    }

    /// Number of bytes starting at `addr` that are mapped, capped at `len`.
    pub fn valid_prefix(&self, addr: Address, len: u64) -> u64 {
        match self.buffers.get(&addr.buffer().0) {
            Some(b) => (b.data.len() as u64).saturating_sub(addr.offset() as u64).min(len),
            None => 0,
        }
    }

    /// First unmapped byte of `addr..addr+len`, if any.
    pub fn check(&self, addr: Address, len: u64) -> Result<(), Address> {
        let ok = self.valid_prefix(addr, len);
        if ok == len {
            Ok(())
        } else {
            Err(addr.add(ok).unwrap_or(addr))
        }
    }

    pub fn region(&self, addr: Address, len: u64) -> Result<&[u8], Address> {
        self.check(addr, len)?;
        let start = addr.offset() as usize;
        Ok(&self.buffers[&addr.buffer().0].data[start..start + len as usize])
    }

    pub fn region_mut(&mut self, addr: Address, len: u64) -> Result<&mut [u8], Address> {
        self.check(addr, len)?;
        let start = addr.offset() as usize;
        let buf = self.buffers.get_mut(&addr.buffer().0).expect("checked");
        Ok(&mut buf.data[start..start + len as usize])
    }

    /// Entire contents of buffer `id`.
    pub(crate) fn buffer_mut(&mut self, id: BufferId) -> Option<&mut [u8]> {
        self.buffers.get_mut(&id.0).map(|b| b.data.as_mut_slice())
    }

    pub fn read(&self, addr: Address, len: u64) -> Result<Vec<u8>, MemoryError> {
        self.region(addr, len).map(<[u8]>::to_vec).map_err(MemoryError::Unmapped)
    }

    pub fn write(&mut self, addr: Address, data: &[u8]) -> Result<(), MemoryError> {
        self.region_mut(addr, data.len() as u64)
            .map(|r| r.copy_from_slice(data))
            .map_err(MemoryError::Unmapped)
    }
}

//! The emulated device: work queues, group arbiters, engines, batch units
//! and the timing model, behind a thread-safe handle.

pub mod arbiter;
mod exec;
mod sim;
pub mod telemetry;

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

pub use arbiter::Arbiter;
pub use telemetry::{Telemetry, WqTelemetry};

use crate::completion::CompletionCell;
use crate::config::{ConfigError, DeviceConfig, PlatformConfig, Tier, TimingModel, WqMode};
use crate::descriptor::{Address, DescriptorError, Opcode, Violation};
use crate::memory::MemoryError;
use sim::Sim;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Decode(#[from] DescriptorError),
    #[error("invalid descriptor: {0}")]
    Invalid(Violation),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("dedicated WQ {0} is full; the submitter must track occupancy")]
    DwqFull(usize),
    #[error("no WQ {0}")]
    UnknownWq(usize),
    #[error("no device instance {0}")]
    UnknownInstance(usize),
    #[error("WQ {0} is not of the requested kind")]
    WrongPortalKind(usize),
    #[error("dedicated WQ {0} already has an owner")]
    PortalOwned(usize),
    #[error("completion address {0:?} is not an allocated slot")]
    UnknownCompletion(Address),
    #[error("completion slot {0:?} still holds an unconsumed record")]
    CompletionInUse(Address),
    #[error("device must be drained before reconfiguration")]
    Busy,
    #[error("device is idle but the awaited record was never written")]
    Stalled,
}

/// Result of one enqueue attempt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnqueueOutcome {
    /// A WQ entry was claimed; the descriptor reaches the queue at `at`.
    Accepted { desc_id: u64, at: f64 },
    /// Shared WQ full; nothing was enqueued. `at` is when the status returned.
    Retry { at: f64 },
}

/// Shared handle to one or more device instances and the memory they see.
#[derive(Clone)]
pub struct Device {
    sim: Arc<Mutex<Sim>>,
}

impl std::fmt::Debug for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = self.sim.lock();
        f.debug_struct("Device").field("instances", &s.n_devices()).field("now", &s.now).finish()
    }
}

impl Device {
    /// A single device instance.
    pub fn configure(cfg: DeviceConfig) -> Result<Self, ConfigError> {
        Self::with_platform(PlatformConfig::single(cfg))
    }

    pub fn with_platform(cfg: PlatformConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Device { sim: Arc::new(Mutex::new(Sim::new(cfg))) })
    }

    /// Replaces the configuration. The device must have no work in flight.
    pub fn reconfigure(&self, cfg: PlatformConfig) -> Result<(), DeviceError> {
        cfg.validate()?;
        self.sim.lock().reconfigure(cfg)
    }

    pub fn config(&self) -> PlatformConfig {
        self.sim.lock().cfg.clone()
    }

    pub fn instances(&self) -> usize {
        self.sim.lock().n_devices()
    }

    pub fn now(&self) -> f64 {
        self.sim.lock().now
    }

    pub fn alloc(&self, len: u64, tier: Tier) -> Result<Address, DeviceError> {
        let id = self.sim.lock().mem.alloc(len, tier)?;
        Ok(Address::new(id, 0))
    }

    pub fn free(&self, addr: Address) -> bool {
        self.sim.lock().mem.free(addr.buffer())
    }

    pub fn write(&self, addr: Address, data: &[u8]) -> Result<(), DeviceError> {
        Ok(self.sim.lock().mem.write(addr, data)?)
    }

    pub fn read(&self, addr: Address, len: u64) -> Result<Vec<u8>, DeviceError> {
        Ok(self.sim.lock().mem.read(addr, len)?)
    }

    pub fn buffer_count(&self) -> usize {
        self.sim.lock().mem.buffer_count()
    }

    pub fn alloc_completion(&self) -> (Address, Arc<CompletionCell>) {
        self.sim.lock().alloc_completion()
    }

    pub fn free_completion(&self, addr: Address) {
        self.sim.lock().free_completion(addr)
    }

    pub fn completion_cell(&self, addr: Address) -> Option<Arc<CompletionCell>> {
        self.sim.lock().completion_cell(addr)
    }

    pub fn completion_slots(&self) -> usize {
        self.sim.lock().completion_slots()
    }

    /// Submits a serialized descriptor to WQ `wq` of `instance` at client
    /// time `at` (clamped to the device clock).
    pub fn enqueue(
        &self,
        instance: usize,
        wq: usize,
        bytes: &[u8],
        dedicated: bool,
        at: f64,
    ) -> Result<EnqueueOutcome, DeviceError> {
        self.sim.lock().enqueue(instance, wq, bytes, dedicated, at)
    }

    pub fn wq_mode(&self, instance: usize, wq: usize) -> Result<WqMode, DeviceError> {
        self.sim.lock().wq_mode(instance, wq)
    }

    pub fn wq_occupancy(&self, instance: usize, wq: usize) -> Option<u32> {
        self.sim.lock().wq_occupancy(instance, wq)
    }

    /// Accepted descriptors of `instance` that have not completed.
    pub fn in_flight(&self, instance: usize) -> u64 {
        self.sim.lock().in_flight(instance)
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.sim.lock().next_event_time()
    }

    /// Processes one event. Returns false when none is pending.
    pub fn step(&self) -> bool {
        self.sim.lock().step()
    }

    pub fn advance_to(&self, t: f64) {
        self.sim.lock().advance_to(t)
    }

    pub fn run_until_idle(&self) {
        self.sim.lock().run_until_idle()
    }

    pub fn is_idle(&self) -> bool {
        self.sim.lock().is_idle()
    }

    /// Runs the simulation until `cell` holds a record, parking when another
    /// thread is driving. Returns the record's completion time.
    pub fn drive_until(&self, cell: &CompletionCell) -> Result<f64, DeviceError> {
        loop {
            if let Some(r) = cell.get() {
                return Ok(r.timestamp_done);
            }
            match self.sim.try_lock() {
                Some(mut s) => {
                    if cell.is_done() {
                        continue;
                    }
                    if !s.step() {
                        if s.is_idle() {
                            return Err(DeviceError::Stalled);
                        }
                        drop(s);
                        cell.wait_timeout(Duration::from_micros(100));
                    }
                }
                None => {
                    cell.wait_timeout(Duration::from_micros(50));
                }
            }
        }
    }

    pub fn snapshot_telemetry(&self) -> Vec<Telemetry> {
        self.sim.lock().telemetry()
    }

    /// One JSON object per device instance, newline separated.
    pub fn telemetry_json_lines(&self) -> String {
        self.snapshot_telemetry().iter().map(|t| t.to_json_line() + "\n").collect()
    }

    pub fn software_baseline(&self, op: Opcode, size: u64, src: Tier, dst: Tier) -> f64 {
        software_baseline(&self.sim.lock().cfg.device.timing, op, size, src, dst)
    }

    pub(crate) fn claim_dwq(&self, instance: usize, wq: usize) -> Result<(), DeviceError> {
        self.sim.lock().claim_dwq(instance, wq)
    }

    pub(crate) fn release_dwq(&self, instance: usize, wq: usize) {
        self.sim.lock().release_dwq(instance, wq)
    }

    pub(crate) fn add_wait(&self, instance: usize, ns: f64, blocked: bool) {
        self.sim.lock().add_wait(instance, ns, blocked)
    }
}

/// Relative per-byte cost of an operation on a core, memcpy = 1.
fn core_op_factor(op: Opcode) -> f64 {
    match op {
        Opcode::MemCopy | Opcode::Compare | Opcode::CrcGen | Opcode::ApplyDelta | Opcode::Batch => 1.0,
        Opcode::Dualcast | Opcode::Dif | Opcode::CreateDelta => 1.5,
        Opcode::MemFill | Opcode::ComparePattern | Opcode::CacheFlush => 0.5,
    }
}

/// Simulated time for a core to perform `op` over `size` bytes with
/// optimized software. Slower tiers stretch the per-byte term by their
/// bandwidth deficit relative to local DRAM.
pub fn software_baseline(t: &TimingModel, op: Opcode, size: u64, src: Tier, dst: Tier) -> f64 {
    let local = &t.tiers.local_dram;
    let read = local.read_bw / t.tiers.get(src).read_bw;
    let write = local.write_bw / t.tiers.get(dst).write_bw;
    t.t_core_fixed + size as f64 * t.t_core_per_byte * read.max(write) * core_op_factor(op)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_affine() {
        let t = TimingModel::default();
        let b = |s| software_baseline(&t, Opcode::MemCopy, s, Tier::LocalDram, Tier::LocalDram);
        assert_eq!(b(0), t.t_core_fixed);
        let v1 = b(4096) - b(0);
        let v2 = b(8192) - b(0);
        assert!((v2 - 2.0 * v1).abs() < 1e-9);
        assert!(software_baseline(&t, Opcode::MemCopy, 4096, Tier::Cxl, Tier::LocalDram) > b(4096));
    }
}

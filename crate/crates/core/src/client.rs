//! Offload client: portals, synchronous and asynchronous submission, batch
//! building and completion waits.
//!
//! Every portal carries its own simulated clock. Submitting charges the
//! portal's submission cost; waiting moves the clock to the completion time
//! of the awaited record and books the gap as wait time in the device
//! telemetry.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::completion::CompletionCell;
use crate::config::{Tier, WqMode};
use crate::descriptor::{
    validate, Address, BatchDescriptor, CompletionRecord, DescriptorError, Violation, WorkDescriptor,
    DESCRIPTOR_BYTES,
};
use crate::engine::{Device, DeviceError, EnqueueOutcome};

/// First and largest retry backoff of `submit_sync`, ns.
pub const BACKOFF_START_NS: f64 = 1_000.0;
pub const BACKOFF_CAP_NS: f64 = 64_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("descriptor rejected: {violation}")]
    Invalid { violation: Violation, record: Option<CompletionRecord> },
    #[error("handle was already waited on")]
    AlreadyWaited,
    #[error("a batch holds 2 to {max} descriptors, got {got}")]
    BatchSize { got: usize, max: u32 },
    #[error("batch entry {index}: {violation}")]
    BatchEntry { index: usize, violation: Violation },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaitMode {
    /// Spin on the completion record.
    Poll,
    /// Sleep until the record changes (optimized wait state).
    Block,
}

/// An accepted descriptor whose completion record is still to be read.
#[derive(Debug)]
pub struct OffloadHandle {
    slot: Address,
    cell: Arc<CompletionCell>,
    submitted_at: f64,
    desc_id: u64,
    instance: usize,
    consumed: AtomicBool,
    owned_slot: Option<Device>,
}

impl OffloadHandle {
    pub fn desc_id(&self) -> u64 {
        self.desc_id
    }

    pub fn submitted_at(&self) -> f64 {
        self.submitted_at
    }

    pub fn completion_addr(&self) -> Address {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.cell.is_done()
    }

    /// Completion time, if the record is already written.
    pub fn done_at(&self) -> Option<f64> {
        self.cell.get().map(|r| r.timestamp_done)
    }

    /// Waits on behalf of a client whose simulated clock is `clock`.
    pub fn wait(&self, device: &Device, mode: WaitMode, clock: &mut f64) -> Result<CompletionRecord, ClientError> {
        if self.consumed.swap(true, Ordering::AcqRel) {
            return Err(ClientError::AlreadyWaited);
        }
        let done = device.drive_until(&self.cell)?;
        let waited = (done - *clock).max(0.0);
        device.add_wait(self.instance, waited, mode == WaitMode::Block);
        *clock = clock.max(done);
        Ok(self.cell.get().expect("driven to completion").clone())
    }
}

impl Drop for OffloadHandle {
    fn drop(&mut self) {
        if let Some(dev) = &self.owned_slot {
            dev.free_completion(self.slot);
        }
    }
}

#[derive(Debug)]
pub enum Submission {
    Accepted(OffloadHandle),
    /// Shared WQ was full; nothing was enqueued.
    Retry,
}

impl Submission {
    pub fn accepted(self) -> Option<OffloadHandle> {
        match self {
            Submission::Accepted(h) => Some(h),
            Submission::Retry => None,
        }
    }
}

/// Submission endpoint of one work queue. A dedicated portal has exactly
/// one owner at a time; shared portals may be opened any number of times.
#[derive(Debug)]
pub struct Portal {
    device: Device,
    instance: usize,
    wq: usize,
    mode: WqMode,
    entries: u32,
    clock: f64,
    client_id: u32,
}

impl Portal {
    pub fn open(device: &Device, instance: usize, wq: usize) -> Result<Self, ClientError> {
        let mode = device.wq_mode(instance, wq)?;
        if mode == WqMode::Dedicated {
            device.claim_dwq(instance, wq)?;
        }
        let entries = device.config().device.wqs[wq].entries;
        Ok(Portal { device: device.clone(), instance, wq, mode, entries, clock: device.now(), client_id: 0 })
    }

    pub fn with_client_id(mut self, id: u32) -> Self {
        self.client_id = id;
        self
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn instance(&self) -> usize {
        self.instance
    }

    pub fn wq(&self) -> usize {
        self.wq
    }

    pub fn mode(&self) -> WqMode {
        self.mode
    }

    /// This client's simulated time, ns.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    /// Charges `dt` ns of client-side work.
    pub fn advance_clock(&mut self, dt: f64) {
        self.clock += dt;
    }

    /// Submits one descriptor. A completion slot is allocated when the
    /// descriptor does not name one.
    pub fn submit(&mut self, mut desc: WorkDescriptor) -> Result<Submission, ClientError> {
        if desc.client_id == 0 {
            desc.client_id = self.client_id;
        }
        let (owned, cell) = if desc.completion.is_null() {
            let (addr, cell) = self.device.alloc_completion();
            desc = desc.with_completion(addr);
            (true, cell)
        } else {
            desc.flags |= crate::descriptor::Flags::REQUEST_COMPLETION;
            let cell = self
                .device
                .completion_cell(desc.completion)
                .ok_or(DeviceError::UnknownCompletion(desc.completion))?;
            (false, cell)
        };
        let release = |dev: &Device| {
            if owned {
                dev.free_completion(desc.completion);
            }
        };
        let bytes = match desc.serialize() {
            Ok(b) => b,
            Err(e) => {
                release(&self.device);
                return Err(e.into());
            }
        };

        // A queue that looks full may have drained by our time. Time is only
        // pushed forward then, so concurrent submitters are not serialized.
        if self.device.wq_occupancy(self.instance, self.wq).is_some_and(|o| o >= self.entries) {
            self.device.advance_to(self.clock);
        }
        let start = self.clock;
        let dedicated = self.mode == WqMode::Dedicated;
        match self.device.enqueue(self.instance, self.wq, &bytes, dedicated, start) {
            Ok(EnqueueOutcome::Accepted { desc_id, at }) => {
                self.clock = at;
                Ok(Submission::Accepted(OffloadHandle {
                    slot: desc.completion,
                    cell,
                    submitted_at: start,
                    desc_id,
                    instance: self.instance,
                    consumed: AtomicBool::new(false),
                    owned_slot: owned.then(|| self.device.clone()),
                }))
            }
            Ok(EnqueueOutcome::Retry { at }) => {
                self.clock = at;
                release(&self.device);
                Ok(Submission::Retry)
            }
            Err(DeviceError::Invalid(violation)) => {
                let record = cell.get().cloned();
                if let Some(r) = &record {
                    self.clock = self.clock.max(r.timestamp_done);
                }
                release(&self.device);
                Err(ClientError::Invalid { violation, record })
            }
            Err(e) => {
                release(&self.device);
                Err(e.into())
            }
        }
    }

    pub fn submit_batch(&mut self, batch: &PreparedBatch) -> Result<Submission, ClientError> {
        self.submit(batch.descriptor().to_work_descriptor())
    }

    /// Submits and blocks until completion, retrying a full shared WQ with
    /// exponential backoff. An invalid descriptor yields its error record.
    pub fn submit_sync(&mut self, desc: WorkDescriptor) -> Result<CompletionRecord, ClientError> {
        let mut backoff = BACKOFF_START_NS;
        loop {
            match self.submit(desc.clone()) {
                Ok(Submission::Accepted(h)) => return self.wait(&h, WaitMode::Block),
                Ok(Submission::Retry) => {
                    self.clock += backoff;
                    backoff = (backoff * 2.0).min(BACKOFF_CAP_NS);
                }
                Err(ClientError::Invalid { record: Some(r), .. }) => return Ok(r),
                Err(e) => return Err(e),
            }
        }
    }

    pub fn wait(&mut self, handle: &OffloadHandle, mode: WaitMode) -> Result<CompletionRecord, ClientError> {
        handle.wait(&self.device, mode, &mut self.clock)
    }

    /// Returns the record without waiting if it is already written at this
    /// portal's current time.
    pub fn poll(&mut self, handle: &OffloadHandle) -> Result<Option<CompletionRecord>, ClientError> {
        self.device.advance_to(self.clock);
        if handle.done_at().is_some_and(|t| t <= self.clock) {
            return self.wait(handle, WaitMode::Poll).map(Some);
        }
        Ok(None)
    }
}

impl Drop for Portal {
    fn drop(&mut self) {
        if self.mode == WqMode::Dedicated {
            self.device.release_dwq(self.instance, self.wq);
        }
    }
}

/// A batch descriptor plus the serialized descriptor array it points to.
/// The array stays mapped, unchanged, until this value is dropped.
#[derive(Debug)]
pub struct PreparedBatch {
    desc: BatchDescriptor,
    device: Device,
}

impl PreparedBatch {
    pub fn descriptor(&self) -> &BatchDescriptor {
        &self.desc
    }

    pub fn count(&self) -> u32 {
        self.desc.count
    }

    pub fn array(&self) -> Address {
        self.desc.desc_array
    }
}

impl Drop for PreparedBatch {
    fn drop(&mut self) {
        self.device.free(self.desc.desc_array);
    }
}

/// Validates `descs` and writes them as a contiguous descriptor array.
pub fn build_batch(device: &Device, descs: &[WorkDescriptor]) -> Result<PreparedBatch, ClientError> {
    let cfg = device.config().device;
    if descs.len() < 2 || descs.len() > cfg.max_batch_size as usize {
        return Err(ClientError::BatchSize { got: descs.len(), max: cfg.max_batch_size });
    }
    let mut bytes = Vec::with_capacity(descs.len() * DESCRIPTOR_BYTES);
    for (index, d) in descs.iter().enumerate() {
        if d.is_batch() {
            return Err(ClientError::BatchEntry { index, violation: Violation::NestedBatch });
        }
        validate(d, &cfg).map_err(|violation| ClientError::BatchEntry { index, violation })?;
        bytes.extend_from_slice(&d.serialize()?);
    }
    let array = device.alloc(bytes.len() as u64, Tier::LocalDram)?;
    device.write(array, &bytes)?;
    Ok(PreparedBatch {
        desc: BatchDescriptor::new(array, descs.len() as u32, Address::NULL),
        device: device.clone(),
    })
}

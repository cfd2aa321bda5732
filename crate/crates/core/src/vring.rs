//! A virtio-style virtqueue whose packet copies are offloaded through a
//! portal, with in-order used-ring write-back.
//!
//! Each enqueue iteration runs three stages: reap completed copies and write
//! back the used entries of the completed prefix, fetch avail descriptors and
//! submit one batch for the burst, then return without waiting. Dequeue runs
//! the same stages in reverse.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::client::{build_batch, ClientError, OffloadHandle, Portal, PreparedBatch, Submission, WaitMode};
use crate::completion::CompletionCell;
use crate::config::{ConfigError, DeviceConfig, FaultModel, PlatformConfig, Tier};
use crate::descriptor::{Address, Flags, Opcode, Status, WorkDescriptor};
use crate::engine::{software_baseline, Device, DeviceError};
use crate::tracker::{OrderedTracker, TrackerError};

pub const DEFAULT_BURST: usize = 32;
pub const DEFAULT_RING_SIZE: usize = 256;
pub const DEFAULT_BUF_LEN: u32 = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VringError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("ring size must be at least 1")]
    EmptyRing,
    #[error("packet of {len} bytes does not fit a {cap}-byte buffer")]
    PacketTooLarge { len: usize, cap: u32 },
    #[error("operation needs a {0} queue")]
    WrongDirection(&'static str),
    #[error("no free guest buffer")]
    RingFull,
    #[error("copy of avail entry {index} failed with {status:?}")]
    CopyFailed { index: u64, status: Status },
}

/// Which side writes the payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Host to guest: the host enqueues packets into guest buffers.
    Rx,
    /// Guest to host: the host dequeues packets the guest posted.
    Tx,
}

/// One guest buffer as published on the avail ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VirtqDesc {
    pub addr: Address,
    pub len: u32,
}

/// A used-ring entry: ring index of the consumed avail descriptor and the
/// number of bytes written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UsedElem {
    pub id: u32,
    pub len: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PacketBurst {
    pub packets: Vec<Vec<u8>>,
}

impl PacketBurst {
    pub fn new(packets: Vec<Vec<u8>>) -> Self {
        PacketBurst { packets }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// Host-side costs, ns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VringTiming {
    /// Per-packet host work other than the copy (descriptor fetch, mbuf
    /// bookkeeping, header handling).
    pub t_pkt_proc: f64,
    /// Writing back one used entry.
    pub t_used_writeback: f64,
    /// One pass over the in-flight list.
    pub t_poll: f64,
}

impl Default for VringTiming {
    fn default() -> Self {
        VringTiming { t_pkt_proc: 120.0, t_used_writeback: 10.0, t_poll: 5.0 }
    }
}

#[derive(Debug)]
struct InFlight {
    seq: u64,
    len: u32,
    slot: Address,
    cell: Arc<CompletionCell>,
}

#[derive(Debug)]
enum Submitted {
    /// The descriptor array must outlive the batch.
    Batch { _array: PreparedBatch, handle: OffloadHandle },
    Single(OffloadHandle),
}

impl Submitted {
    fn handle(&self) -> &OffloadHandle {
        match self {
            Submitted::Batch { handle: h, .. } | Submitted::Single(h) => h,
        }
    }
}

/// Ring of `size` guest buffers with avail and used rings. Sequence numbers
/// grow without bound; ring positions are sequence numbers mod `size`.
#[derive(Debug)]
pub struct Virtqueue {
    device: Device,
    dir: Direction,
    size: usize,
    buf_len: u32,
    guest_bufs: Vec<Address>,
    mbufs: Vec<Address>,
    avail: Vec<VirtqDesc>,
    used: Vec<UsedElem>,
    // reclaimed <= used_idx <= consumed <= posted <= reclaimed + size
    posted: u64,
    consumed: u64,
    used_idx: u64,
    reclaimed: u64,
    tracker: OrderedTracker<InFlight>,
    submitted: VecDeque<Submitted>,
    timing: VringTiming,
}

impl Virtqueue {
    pub fn new(device: &Device, dir: Direction, size: usize, buf_len: u32) -> Result<Self, VringError> {
        if size == 0 {
            return Err(VringError::EmptyRing);
        }
        let mut guest_bufs = Vec::with_capacity(size);
        let mut mbufs = Vec::with_capacity(size);
        for _ in 0..size {
            guest_bufs.push(device.alloc(buf_len as u64, Tier::LocalDram)?);
            mbufs.push(device.alloc(buf_len as u64, Tier::LocalDram)?);
        }
        let empty = VirtqDesc { addr: Address::NULL, len: 0 };
        let mut vq = Virtqueue {
            device: device.clone(),
            dir,
            size,
            buf_len,
            guest_bufs,
            mbufs,
            avail: vec![empty; size],
            used: vec![UsedElem { id: 0, len: 0 }; size],
            posted: 0,
            consumed: 0,
            used_idx: 0,
            reclaimed: 0,
            tracker: OrderedTracker::new(),
            submitted: VecDeque::new(),
            timing: VringTiming::default(),
        };
        if dir == Direction::Rx {
            vq.guest_post_rx_buffers();
        }
        Ok(vq)
    }

    pub fn with_timing(mut self, timing: VringTiming) -> Self {
        self.timing = timing;
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn direction(&self) -> Direction {
        self.dir
    }

    /// Avail entries the host has not consumed yet.
    pub fn avail_pending(&self) -> usize {
        (self.posted - self.consumed) as usize
    }

    /// Copies submitted but not yet written back.
    pub fn in_flight(&self) -> usize {
        self.tracker.len()
    }

    /// Total used entries written back.
    pub fn used_count(&self) -> u64 {
        self.used_idx
    }

    fn ring(&self, seq: u64) -> usize {
        (seq % self.size as u64) as usize
    }

    fn expect(&self, dir: Direction) -> Result<(), VringError> {
        if self.dir != dir {
            return Err(VringError::WrongDirection(if dir == Direction::Rx { "rx" } else { "tx" }));
        }
        Ok(())
    }

    // ---- guest side ----------------------------------------------------------

    /// Posts every free guest buffer on the avail ring of an rx queue.
    pub fn guest_post_rx_buffers(&mut self) -> usize {
        let mut n = 0;
        while self.posted < self.reclaimed + self.size as u64 {
            let i = self.ring(self.posted);
            self.avail[i] = VirtqDesc { addr: self.guest_bufs[i], len: self.buf_len };
            self.posted += 1;
            n += 1;
        }
        n
    }

    /// Reads used entries of an rx queue in ring order and reposts their
    /// buffers.
    pub fn guest_receive(&mut self) -> Result<Vec<Vec<u8>>, VringError> {
        self.expect(Direction::Rx)?;
        let mut out = Vec::new();
        while self.reclaimed < self.used_idx {
            let i = self.ring(self.reclaimed);
            let u = self.used[i];
            debug_assert_eq!(u.id as usize, i, "used ring out of avail order");
            out.push(self.device.read(self.guest_bufs[u.id as usize], u.len as u64)?);
            self.reclaimed += 1;
        }
        self.guest_post_rx_buffers();
        Ok(out)
    }

    /// Places `packet` in the next free guest buffer of a tx queue and posts it.
    pub fn guest_send(&mut self, packet: &[u8]) -> Result<(), VringError> {
        self.expect(Direction::Tx)?;
        if packet.len() > self.buf_len as usize {
            return Err(VringError::PacketTooLarge { len: packet.len(), cap: self.buf_len });
        }
        self.guest_reclaim_tx();
        if self.posted >= self.reclaimed + self.size as u64 {
            return Err(VringError::RingFull);
        }
        let i = self.ring(self.posted);
        self.device.write(self.guest_bufs[i], packet)?;
        self.avail[i] = VirtqDesc { addr: self.guest_bufs[i], len: packet.len() as u32 };
        self.posted += 1;
        Ok(())
    }

    /// Frees tx buffers the host has written back.
    pub fn guest_reclaim_tx(&mut self) -> usize {
        let n = (self.used_idx - self.reclaimed) as usize;
        self.reclaimed = self.used_idx;
        n
    }

    // ---- host side -----------------------------------------------------------

    /// Moves every copy finished by `clock` into the tracker, then writes
    /// back the completed prefix. Returns the written-back entries.
    fn reap(&mut self, clock: &mut f64) -> Result<Vec<InFlight>, VringError> {
        self.device.advance_to(*clock);
        *clock += self.timing.t_poll;
        let now = *clock;
        let done: Vec<_> = self
            .tracker
            .iter()
            .filter(|(_, f, completed)| !completed && f.cell.get().is_some_and(|r| r.timestamp_done <= now))
            .map(|(s, _, _)| s)
            .collect();
        for s in done {
            self.tracker.complete(s)?;
        }
        while self.submitted.front().is_some_and(|s| s.handle().done_at().is_some_and(|t| t <= now)) {
            self.submitted.pop_front();
        }
        let drained = self.tracker.drain();
        for f in &drained {
            let status = f.cell.status();
            self.device.free_completion(f.slot);
            if status != Status::Success {
                return Err(VringError::CopyFailed { index: f.seq, status });
            }
            self.write_used(f.seq, f.len, clock);
        }
        Ok(drained)
    }

    fn write_used(&mut self, seq: u64, len: u32, clock: &mut f64) {
        debug_assert_eq!(seq, self.used_idx);
        let i = self.ring(seq);
        self.used[i] = UsedElem { id: i as u32, len };
        self.used_idx += 1;
        *clock += self.timing.t_used_writeback;
    }

    /// Builds one copy per entry and submits them as a single batch (or a
    /// plain descriptor for one entry).
    fn submit_copies(&mut self, copies: Vec<(u64, Address, Address, u32)>, portal: &mut Portal) -> Result<(), VringError> {
        if copies.is_empty() {
            return Ok(());
        }
        let t_prepare = self.device.config().device.timing.t_prepare;
        let mut descs = Vec::with_capacity(copies.len());
        for (seq, src, dst, len) in copies {
            let (slot, cell) = self.device.alloc_completion();
            descs.push(
                WorkDescriptor::copy(src, dst, len as u64)
                    .with_flags(Flags::CACHE_CONTROL)
                    .with_completion(slot),
            );
            self.tracker.submit(InFlight { seq, len, slot, cell });
            portal.advance_clock(self.timing.t_pkt_proc + t_prepare);
        }
        let batch = if descs.len() > 1 { Some(build_batch(&self.device, &descs)?) } else { None };
        let mut backoff = crate::client::BACKOFF_START_NS;
        loop {
            let res = match &batch {
                Some(b) => portal.submit_batch(b),
                None => portal.submit(descs[0].clone()),
            };
            match res {
                Ok(Submission::Accepted(h)) => {
                    self.submitted.push_back(match batch {
                        Some(b) => Submitted::Batch { _array: b, handle: h },
                        None => Submitted::Single(h),
                    });
                    return Ok(());
                }
                Ok(Submission::Retry) => {
                    portal.advance_clock(backoff);
                    backoff = (backoff * 2.0).min(crate::client::BACKOFF_CAP_NS);
                }
                Err(ClientError::Device(DeviceError::DwqFull(_))) => {
                    // Our own earlier bursts fill the queue: wait for the oldest.
                    let oldest = self.submitted.pop_front().ok_or(DeviceError::Stalled)?;
                    portal.wait(oldest.handle(), WaitMode::Poll)?;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Host to guest. Returns how many packets were submitted; fewer than
    /// `burst.len()` when the avail ring runs dry.
    pub fn enqueue_burst(&mut self, burst: &PacketBurst, portal: &mut Portal) -> Result<usize, VringError> {
        self.expect(Direction::Rx)?;
        let mut clock = portal.clock();
        self.reap(&mut clock)?;
        portal.set_clock(clock);

        let n = burst.len().min(self.avail_pending());
        let mut copies = Vec::with_capacity(n);
        for p in &burst.packets[..n] {
            let seq = self.consumed;
            let i = self.ring(seq);
            let desc = self.avail[i];
            if p.len() > desc.len as usize {
                return Err(VringError::PacketTooLarge { len: p.len(), cap: desc.len });
            }
            self.device.write(self.mbufs[i], p)?;
            copies.push((seq, self.mbufs[i], desc.addr, p.len() as u32));
            self.consumed += 1;
        }
        self.submit_copies(copies, portal)?;
        Ok(n)
    }

    /// Host to guest with the copies done by the host core.
    pub fn enqueue_burst_cpu(&mut self, burst: &PacketBurst, clock: &mut f64) -> Result<usize, VringError> {
        self.expect(Direction::Rx)?;
        let t = self.device.config().device.timing;
        *clock += self.timing.t_poll;
        let n = burst.len().min(self.avail_pending());
        for p in &burst.packets[..n] {
            let seq = self.consumed;
            let desc = self.avail[self.ring(seq)];
            if p.len() > desc.len as usize {
                return Err(VringError::PacketTooLarge { len: p.len(), cap: desc.len });
            }
            self.device.write(desc.addr, p)?;
            *clock += self.timing.t_pkt_proc
                + software_baseline(&t, Opcode::MemCopy, p.len() as u64, Tier::LocalDram, Tier::LocalDram);
            self.consumed += 1;
            self.write_used(seq, p.len() as u32, clock);
        }
        Ok(n)
    }

    /// Guest to host: submits copies for up to `max` posted packets, then
    /// returns the packets whose copies form the completed prefix.
    pub fn dequeue_burst(&mut self, portal: &mut Portal, max: usize) -> Result<PacketBurst, VringError> {
        self.expect(Direction::Tx)?;
        let n = max.min(self.avail_pending());
        let mut copies = Vec::with_capacity(n);
        for _ in 0..n {
            let seq = self.consumed;
            let i = self.ring(seq);
            let desc = self.avail[i];
            copies.push((seq, desc.addr, self.mbufs[i], desc.len));
            self.consumed += 1;
        }
        self.submit_copies(copies, portal)?;

        let mut clock = portal.clock();
        let drained = self.reap(&mut clock)?;
        portal.set_clock(clock);
        let mut packets = Vec::with_capacity(drained.len());
        for f in drained {
            packets.push(self.device.read(self.mbufs[self.ring(f.seq)], f.len as u64)?);
        }
        Ok(PacketBurst::new(packets))
    }

    /// Waits for every submitted copy and writes back all used entries.
    pub fn flush(&mut self, portal: &mut Portal) -> Result<usize, VringError> {
        while let Some(s) = self.submitted.pop_front() {
            portal.wait(s.handle(), WaitMode::Poll)?;
        }
        let mut clock = portal.clock();
        for f in &self.tracker.iter().map(|(_, f, _)| f.cell.clone()).collect::<Vec<_>>() {
            clock = clock.max(self.device.drive_until(f)?);
        }
        let n = self.reap(&mut clock)?.len();
        portal.set_clock(clock);
        Ok(n)
    }
}

impl Drop for Virtqueue {
    fn drop(&mut self) {
        self.submitted.clear();
        for (_, f, _) in self.tracker.iter() {
            self.device.free_completion(f.slot);
        }
        for a in self.guest_bufs.iter().chain(&self.mbufs) {
            self.device.free(*a);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ForwardMode {
    CpuCopy,
    DsaOffload,
}

impl ForwardMode {
    pub fn name(self) -> &'static str {
        match self {
            ForwardMode::CpuCopy => "cpu_copy",
            ForwardMode::DsaOffload => "dsa_offload",
        }
    }
}

impl std::str::FromStr for ForwardMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu_copy" | "cpu" => Ok(ForwardMode::CpuCopy),
            "dsa_offload" | "dsa" => Ok(ForwardMode::DsaOffload),
            _ => Err(ConfigError::Parse(format!("unknown forwarding mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardConfig {
    pub packet_sizes: Vec<u32>,
    pub modes: Vec<ForwardMode>,
    /// Simulated host time per run, ns.
    pub duration_ns: f64,
    pub burst: usize,
    pub ring_size: usize,
    pub timing: VringTiming,
    pub platform: PlatformConfig,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            packet_sizes: vec![64, 128, 256, 512, 1024, 1518],
            modes: vec![ForwardMode::CpuCopy, ForwardMode::DsaOffload],
            duration_ns: 2_000_000.0,
            burst: DEFAULT_BURST,
            ring_size: DEFAULT_RING_SIZE,
            timing: VringTiming::default(),
            platform: PlatformConfig::single(DeviceConfig::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardRow {
    pub packet_size: u32,
    pub mode: ForwardMode,
    pub mpps: f64,
}

/// Simulated vhost enqueue forwarding rate for every mode and packet size.
/// The guest drains the rx ring as soon as entries are written back.
pub fn forward_benchmark(cfg: &ForwardConfig) -> Result<Vec<ForwardRow>, VringError> {
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        for &size in &cfg.packet_sizes {
            let mut platform = cfg.platform.clone();
            platform.device.fault = FaultModel { stall_probability: 0.0, ..platform.device.fault };
            platform.functional = false;
            let device = Device::with_platform(platform)?;
            let mut vq = Virtqueue::new(&device, Direction::Rx, cfg.ring_size, size.max(1))?.with_timing(cfg.timing);
            let burst = PacketBurst::new(vec![vec![0xA5; size as usize]; cfg.burst.max(1)]);
            let delivered = match mode {
                ForwardMode::CpuCopy => {
                    let mut clock = 0.0;
                    while clock < cfg.duration_ns {
                        vq.enqueue_burst_cpu(&burst, &mut clock)?;
                        vq.guest_receive()?;
                    }
                    vq.used_count() as f64 / clock
                }
                ForwardMode::DsaOffload => {
                    let mut portal = Portal::open(&device, 0, 0)?;
                    while portal.clock() < cfg.duration_ns {
                        vq.enqueue_burst(&burst, &mut portal)?;
                        vq.guest_receive()?;
                    }
                    vq.used_count() as f64 / portal.clock()
                }
            };
            rows.push(ForwardRow { packet_size: size, mode, mpps: delivered * 1e3 });
        }
    }
    Ok(rows)
}

/// Writes `packet_size,mode,mpps` rows.
pub fn write_forward_csv<W: std::io::Write>(rows: &[ForwardRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["packet_size", "mode", "mpps"])?;
    for r in rows {
        w.write_record([r.packet_size.to_string(), r.mode.name().to_string(), format!("{:.6}", r.mpps)])?;
    }
    w.flush()?;
    Ok(())
}

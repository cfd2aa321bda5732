//! Microbenchmark harness: parameter sweeps over the simulated device, the
//! per-phase latency breakdown and the guideline presets G1 to G6.
//!
//! Submitters are co-simulated in one thread. Each client has its own clock;
//! the scheduler alternates between the device's next event and the client
//! with the earliest runnable action, so results depend only on the spec and
//! the seed.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::client::{build_batch, ClientError, OffloadHandle, Portal, PreparedBatch, Submission, WaitMode};
use crate::client::{BACKOFF_CAP_NS, BACKOFF_START_NS};
use crate::config::{ConfigError, DeviceConfig, PlatformConfig, Tier, WqMode};
use crate::descriptor::{validate, Address, Flags, Opcode, WorkDescriptor};
use crate::engine::{software_baseline, Device, DeviceError};
use crate::ops::dif::{DifBlockSize, DifMode, DifParams};
use crate::ops::FillParams;

pub const CSV_COLUMNS: [&str; 16] = [
    "op", "mode", "ts", "bs", "qd", "wq_mode", "n_engines", "n_devices", "src_tier", "dst_tier", "thr_gbps",
    "base_gbps", "speedup", "lat_mean_ns", "lat_p99_ns", "wait_frac",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("descriptor {0} failed with {1:?}")]
    Failed(u64, crate::descriptor::Status),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SyncMode {
    Sync,
    Async,
}

impl SyncMode {
    pub fn name(self) -> &'static str {
        match self {
            SyncMode::Sync => "sync",
            SyncMode::Async => "async",
        }
    }
}

impl std::str::FromStr for SyncMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(SyncMode::Sync),
            "async" => Ok(SyncMode::Async),
            _ => Err(ConfigError::Parse(format!("unknown mode {s:?}"))),
        }
    }
}

/// One sweep: every combination of `transfer_sizes` and `batch_sizes`.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub op: Opcode,
    pub transfer_sizes: Vec<u64>,
    pub batch_sizes: Vec<u32>,
    /// In-flight submissions per client in async mode.
    pub queue_depth: u32,
    pub mode: SyncMode,
    pub wq_mode: WqMode,
    /// WQs per device, all in one group with every engine.
    pub n_wqs: usize,
    pub wq_size: u32,
    pub n_engines: usize,
    pub n_devices: usize,
    /// Submitting clients in total; defaults to one per WQ per device.
    pub threads: Option<usize>,
    pub src_tier: Tier,
    pub dst_tier: Tier,
    pub cache_control: bool,
    /// Submissions per client per point (a batch counts once).
    pub iterations: u32,
    pub seed: u64,
    pub fault_p: f64,
    /// Accepted for interface parity; page size has no timing effect.
    pub huge_pages: bool,
    /// Run the data operations for real. Timing is the same either way.
    pub functional: bool,
    /// Timing, tiers, socket and DDIO parameters; the topology fields are
    /// replaced by the spec's.
    pub base: PlatformConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            op: Opcode::MemCopy,
            transfer_sizes: vec![4096],
            batch_sizes: vec![1],
            queue_depth: 32,
            mode: SyncMode::Sync,
            wq_mode: WqMode::Dedicated,
            n_wqs: 1,
            wq_size: 32,
            n_engines: 4,
            n_devices: 1,
            threads: None,
            src_tier: Tier::LocalDram,
            dst_tier: Tier::LocalDram,
            cache_control: false,
            iterations: 64,
            seed: 0,
            fault_p: 0.0,
            huge_pages: false,
            functional: false,
            base: PlatformConfig::single(DeviceConfig::default()),
        }
    }
}

impl SweepSpec {
    pub fn clients(&self) -> usize {
        self.threads.unwrap_or(self.n_wqs * self.n_devices)
    }

    pub fn platform(&self) -> Result<PlatformConfig, ConfigError> {
        let mut device = DeviceConfig::single_group(self.n_wqs, self.wq_mode, self.wq_size, self.n_engines);
        device.timing = self.base.device.timing.clone();
        device.fault = self.base.device.fault.clone();
        device.fault.stall_probability = self.fault_p;
        device.max_batch_size = self.base.device.max_batch_size;
        device.max_transfer_size = self.base.device.max_transfer_size;
        let cfg = PlatformConfig {
            device,
            n_devices: self.n_devices,
            seed: self.seed,
            functional: self.functional,
            ..self.base.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<PlatformConfig, HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.into()));
        if self.transfer_sizes.is_empty() || self.batch_sizes.is_empty() {
            return bad("transfer and batch size lists must be non-empty");
        }
        if self.iterations == 0 || self.queue_depth == 0 {
            return bad("iterations and queue depth must be at least 1");
        }
        if self.clients() == 0 {
            return bad("at least one thread required");
        }
        if self.op == Opcode::Batch {
            return bad("batch is not a sweepable operation; use batch sizes");
        }
        let cfg = self.platform()?;
        if self.wq_mode == WqMode::Dedicated && self.clients() > self.n_wqs * self.n_devices {
            return bad("dedicated WQs need one WQ per thread");
        }
        for &bs in &self.batch_sizes {
            if bs == 0 || bs > cfg.device.max_batch_size {
                return bad("batch size outside 1..=max_batch_size");
            }
        }
        for &ts in &self.transfer_sizes {
            if ts == 0 {
                return bad("transfer size must be positive");
            }
            let probe = op_descriptor(self.op, ts, Address::new(crate::BufferId(1), 0), Address::new(crate::BufferId(2), 0), Address::new(crate::BufferId(3), 0));
            validate(&probe, &cfg.device).map_err(|v| HarnessError::Spec(format!("{} at {ts} B: {v}", self.op)))?;
            let span = ts.saturating_mul(self.batch_sizes.iter().copied().max().unwrap_or(1) as u64);
            if span.saturating_mul(2) > u32::MAX as u64 {
                return bad("transfer size times batch size is too large");
            }
        }
        Ok(cfg)
    }
}

/// Descriptor for one `ts`-byte operation with the harness's buffer layout.
fn op_descriptor(op: Opcode, ts: u64, src: Address, dst: Address, aux: Address) -> WorkDescriptor {
    match op {
        Opcode::MemCopy => WorkDescriptor::copy(src, dst, ts),
        Opcode::MemFill => WorkDescriptor::fill(FillParams::repeat_byte(0x5A), dst, ts),
        Opcode::Compare => WorkDescriptor::compare(src, dst, ts),
        Opcode::ComparePattern => WorkDescriptor::compare_pattern([0; 8], src, ts),
        Opcode::CrcGen => WorkDescriptor::crc(0, src, Address::NULL, ts),
        Opcode::Dualcast => WorkDescriptor::dualcast(src, dst, aux, ts),
        Opcode::Dif => WorkDescriptor::dif(DifParams::new(DifBlockSize::B512, DifMode::Insert, 0, 0), src, dst, ts),
        Opcode::CreateDelta => WorkDescriptor::create_delta(src, dst, ts, aux, delta_room(ts)),
        Opcode::ApplyDelta => WorkDescriptor::apply_delta(src, dst, ts, aux, 0),
        Opcode::CacheFlush => WorkDescriptor::cache_flush(dst, ts),
        Opcode::Batch => WorkDescriptor::new(Opcode::Batch),
    }
}

fn delta_room(ts: u64) -> u32 {
    (ts / 8 * 12).min(u32::MAX as u64) as u32
}

/// Result of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub op: Opcode,
    pub mode: SyncMode,
    pub ts: u64,
    pub bs: u32,
    pub qd: u32,
    pub wq_mode: WqMode,
    pub n_engines: usize,
    pub n_devices: usize,
    pub src_tier: Tier,
    pub dst_tier: Tier,
    pub thr_gbps: f64,
    pub base_gbps: f64,
    pub speedup: f64,
    pub lat_mean_ns: f64,
    pub lat_p99_ns: f64,
    pub wait_frac: f64,
}

impl SweepRow {
    fn record(&self) -> [String; 16] {
        [
            self.op.name().into(),
            self.mode.name().into(),
            self.ts.to_string(),
            self.bs.to_string(),
            self.qd.to_string(),
            self.wq_mode.name().into(),
            self.n_engines.to_string(),
            self.n_devices.to_string(),
            self.src_tier.name().into(),
            self.dst_tier.name().into(),
            format!("{:.6}", self.thr_gbps),
            format!("{:.6}", self.base_gbps),
            format!("{:.6}", self.speedup),
            format!("{:.3}", self.lat_mean_ns),
            format!("{:.3}", self.lat_p99_ns),
            format!("{:.6}", self.wait_frac),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[SweepRow]) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(xs: &mut [f64], p: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * xs.len() as f64).ceil() as usize;
    xs[rank.clamp(1, xs.len()) - 1]
}

enum Work {
    Single(WorkDescriptor),
    Batch(PreparedBatch),
}

struct Client {
    portal: Portal,
    work: Work,
    remaining: u32,
    limit: usize,
    pending: VecDeque<(OffloadHandle, f64)>,
    must_wait: bool,
    backoff: f64,
    latencies: Vec<f64>,
    submit_ns: f64,
    wait_ns: f64,
    bufs: [Address; 3],
}

impl Client {
    fn waiting(&self) -> bool {
        !self.pending.is_empty() && (self.must_wait || self.remaining == 0 || self.pending.len() >= self.limit)
    }

    /// Earliest time the client can act, if it can act before the device
    /// makes progress.
    fn ready_at(&self) -> Option<f64> {
        if self.waiting() {
            let (h, _) = self.pending.front()?;
            return h.done_at().map(|d| d.max(self.portal.clock()));
        }
        (self.remaining > 0).then(|| self.portal.clock())
    }

    fn finished(&self) -> bool {
        self.remaining == 0 && self.pending.is_empty()
    }

    fn act(&mut self) -> Result<(), HarnessError> {
        let before = self.portal.clock();
        if self.waiting() {
            let (h, start) = self.pending.pop_front().expect("waiting implies pending");
            let rec = self.portal.wait(&h, WaitMode::Block)?;
            if !rec.status.is_success() {
                return Err(HarnessError::Failed(rec.desc_id, rec.status));
            }
            self.wait_ns += (rec.timestamp_done - before).max(0.0);
            self.latencies.push(rec.timestamp_done - start);
            self.must_wait = false;
            return Ok(());
        }
        let res = match &self.work {
            Work::Single(d) => self.portal.submit(d.clone())?,
            Work::Batch(b) => self.portal.submit_batch(b)?,
        };
        match res {
            Submission::Accepted(h) => {
                self.pending.push_back((h, before));
                self.remaining -= 1;
                self.backoff = BACKOFF_START_NS;
            }
            Submission::Retry if !self.pending.is_empty() => self.must_wait = true,
            Submission::Retry => {
                self.portal.advance_clock(self.backoff);
                self.backoff = (self.backoff * 2.0).min(BACKOFF_CAP_NS);
            }
        }
        self.submit_ns += self.portal.clock() - before;
        Ok(())
    }
}

/// Places client `j`: device instance and WQ.
fn placement(spec: &SweepSpec, j: usize) -> (usize, usize) {
    (j % spec.n_devices, (j / spec.n_devices) % spec.n_wqs)
}

fn run_point(spec: &SweepSpec, cfg: &PlatformConfig, ts: u64, bs: u32) -> Result<SweepRow, HarnessError> {
    let device = Device::with_platform(cfg.clone())?;
    let flags = if spec.cache_control { Flags::CACHE_CONTROL } else { Flags::empty() };
    let span = ts * bs as u64;
    let mut clients = Vec::with_capacity(spec.clients());
    for j in 0..spec.clients() {
        let (inst, wq) = placement(spec, j);
        let portal = Portal::open(&device, inst, wq)?.with_client_id(j as u32 + 1);
        let src = device.alloc(span, spec.src_tier)?;
        let dst = device.alloc(span * 2, spec.dst_tier)?;
        let aux = device.alloc(span.max(delta_room(ts) as u64 * bs as u64).max(1), spec.dst_tier)?;
        let at = |base: Address, stride: u64, i: u32| base.add(stride * i as u64).expect("offset fits");
        let desc = |i: u32| {
            op_descriptor(spec.op, ts, at(src, ts, i), at(dst, 2 * ts, i), at(aux, ts.max(delta_room(ts) as u64), i))
                .with_flags(flags)
        };
        let work = if bs == 1 {
            Work::Single(desc(0))
        } else {
            Work::Batch(build_batch(&device, &(0..bs).map(desc).collect::<Vec<_>>())?)
        };
        let limit = match (spec.mode, spec.wq_mode) {
            (SyncMode::Sync, _) => 1,
            (SyncMode::Async, WqMode::Dedicated) => spec.queue_depth.min(spec.wq_size) as usize,
            (SyncMode::Async, WqMode::Shared) => spec.queue_depth as usize,
        };
        clients.push(Client {
            portal,
            work,
            remaining: spec.iterations,
            limit,
            pending: VecDeque::new(),
            must_wait: false,
            backoff: BACKOFF_START_NS,
            latencies: Vec::with_capacity(spec.iterations as usize),
            submit_ns: 0.0,
            wait_ns: 0.0,
            bufs: [src, dst, aux],
        });
    }

    loop {
        let mut best: Option<(f64, usize)> = None;
        for (k, c) in clients.iter().enumerate() {
            if let Some(t) = c.ready_at() {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, k));
                }
            }
        }
        match (best, device.next_event_time()) {
            (Some((t, k)), td) if td.is_none_or(|td| t < td) => clients[k].act()?,
            (_, Some(_)) => {
                device.step();
            }
            (Some(_), None) => unreachable!("guard accepts any client time without events"),
            (None, None) if clients.iter().all(Client::finished) => break,
            (None, None) => return Err(DeviceError::Stalled.into()),
        }
    }

    let makespan = clients.iter().map(|c| c.portal.clock()).fold(0.0, f64::max);
    let total_bytes = span as f64 * spec.iterations as f64 * clients.len() as f64;
    let mut lat: Vec<f64> = clients.iter().flat_map(|c| c.latencies.iter().copied()).collect();
    let lat_mean = lat.iter().sum::<f64>() / lat.len() as f64;
    let lat_p99 = percentile(&mut lat, 99.0);
    let submit: f64 = clients.iter().map(|c| c.submit_ns).sum();
    let wait: f64 = clients.iter().map(|c| c.wait_ns).sum();
    let base = software_baseline(&cfg.device.timing, spec.op, ts, spec.src_tier, spec.dst_tier);
    let thr = round6(total_bytes / makespan);
    let base_gbps = round6(ts as f64 / base);
    for c in &clients {
        for a in c.bufs {
            device.free(a);
        }
    }
    Ok(SweepRow {
        op: spec.op,
        mode: spec.mode,
        ts,
        bs,
        qd: if spec.mode == SyncMode::Sync { 1 } else { spec.queue_depth },
        wq_mode: spec.wq_mode,
        n_engines: spec.n_engines,
        n_devices: spec.n_devices,
        src_tier: spec.src_tier,
        dst_tier: spec.dst_tier,
        thr_gbps: thr,
        base_gbps,
        speedup: thr / base_gbps,
        lat_mean_ns: lat_mean,
        lat_p99_ns: lat_p99,
        wait_frac: if submit + wait > 0.0 { wait / (submit + wait) } else { 0.0 },
    })
}

/// Runs every (transfer size, batch size) point of `spec`, in that nesting
/// order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    let cfg = spec.validate()?;
    let mut rows = Vec::new();
    for &ts in &spec.transfer_sizes {
        for &bs in &spec.batch_sizes {
            rows.push(run_point(spec, &cfg, ts, bs)?);
        }
    }
    Ok(rows)
}

/// Mean simulated time of each phase of one synchronous offload, ns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Breakdown {
    pub op: Opcode,
    pub ts: u64,
    pub bs: u32,
    pub allocate: f64,
    pub prepare: f64,
    pub submit: f64,
    pub wait: f64,
    /// Measured end to end, from allocation to the completion record.
    pub total: f64,
}

impl Breakdown {
    pub fn phase_sum(&self) -> f64 {
        self.allocate + self.prepare + self.submit + self.wait
    }
}

/// Times `reps` back-to-back synchronous offloads of `bs` descriptors of
/// `ts` bytes on one dedicated WQ.
pub fn run_latency_breakdown(
    op: Opcode,
    ts: u64,
    bs: u32,
    base: &PlatformConfig,
    reps: u32,
) -> Result<Breakdown, HarnessError> {
    let spec = SweepSpec {
        op,
        transfer_sizes: vec![ts],
        batch_sizes: vec![bs],
        base: base.clone(),
        functional: base.functional,
        ..SweepSpec::default()
    };
    let cfg = spec.validate()?;
    let t = cfg.device.timing.clone();
    let device = Device::with_platform(cfg)?;
    let mut portal = Portal::open(&device, 0, 0)?;
    let span = ts * bs as u64;
    let (mut alloc, mut prep, mut sub, mut wait, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..reps.max(1) {
        let start = portal.clock();
        let src = device.alloc(span, Tier::LocalDram)?;
        let dst = device.alloc(span * 2, Tier::LocalDram)?;
        let aux = device.alloc(span.max(delta_room(ts) as u64 * bs as u64).max(1), Tier::LocalDram)?;
        portal.advance_clock(t.t_alloc);
        alloc += t.t_alloc;

        let stride = ts.max(delta_room(ts) as u64);
        let descs: Vec<_> = (0..bs as u64)
            .map(|i| op_descriptor(op, ts, src.add(i * ts).unwrap(), dst.add(2 * i * ts).unwrap(), aux.add(i * stride).unwrap()))
            .collect();
        let batch = if bs > 1 { Some(build_batch(&device, &descs)?) } else { None };
        portal.advance_clock(t.t_prepare * bs as f64);
        prep += t.t_prepare * bs as f64;

        let before = portal.clock();
        let h = loop {
            let r = match &batch {
                Some(b) => portal.submit_batch(b)?,
                None => portal.submit(descs[0].clone())?,
            };
            if let Submission::Accepted(h) = r {
                break h;
            }
        };
        let submitted = portal.clock();
        sub += submitted - before;
        portal.wait(&h, WaitMode::Block)?;
        wait += portal.clock() - submitted;
        total += portal.clock() - start;
        drop(batch);
        for a in [src, dst, aux] {
            device.free(a);
        }
    }
    let n = reps.max(1) as f64;
    Ok(Breakdown { op, ts, bs, allocate: alloc / n, prepare: prep / n, submit: sub / n, wait: wait / n, total: total / n })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresetPoint {
    pub label: String,
    pub thr_gbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresetReport {
    pub name: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub conclusion: String,
    pub points: Vec<PresetPoint>,
}

pub const PRESETS: [&str; 6] = ["G1", "G2", "G3", "G4", "G5", "G6"];

fn thr(spec: SweepSpec) -> Result<f64, HarnessError> {
    Ok(run_sweep(&spec)?[0].thr_gbps)
}

fn point(label: impl Into<String>, thr_gbps: f64) -> PresetPoint {
    PresetPoint { label: label.into(), thr_gbps }
}

/// Runs the canonical experiment behind a guideline and checks its
/// qualitative conclusion.
pub fn run_guideline_preset(name: &str, base: &PlatformConfig) -> Result<PresetReport, HarnessError> {
    let spec = |ts: u64, bs: u32| SweepSpec {
        transfer_sizes: vec![ts],
        batch_sizes: vec![bs],
        base: base.clone(),
        seed: base.seed,
        ..SweepSpec::default()
    };
    let report = match name.to_ascii_uppercase().as_str() {
        "G1" => {
            let coarse = thr(spec(32 << 10, 4))?;
            let fine = thr(spec(1 << 10, 128))?;
            PresetReport {
                name: "G1",
                title: "Keep a balanced batch size and transfer size",
                passed: coarse > fine,
                conclusion: format!("128 KiB per batch: 32 KiB x 4 gives {coarse:.2} GB/s, 1 KiB x 128 gives {fine:.2} GB/s"),
                points: vec![point("sync ts=32768 bs=4", coarse), point("sync ts=1024 bs=128", fine)],
            }
        }
        "G2" => {
            let mut points = Vec::new();
            let mut passed = true;
            for ts in [256u64, 1 << 10, 4 << 10, 16 << 10] {
                let s = thr(spec(ts, 1))?;
                let a = thr(SweepSpec { mode: SyncMode::Async, ..spec(ts, 1) })?;
                passed &= a >= s;
                points.push(point(format!("sync ts={ts}"), s));
                points.push(point(format!("async ts={ts}"), a));
            }
            PresetReport {
                name: "G2",
                title: "Use the device asynchronously when possible",
                passed,
                conclusion: "async throughput at or above sync at every transfer size".into(),
                points,
            }
        }
        "G3" => {
            // Producer offloads a copy, then a core consumes the destination.
            let ts = 16u64 << 10;
            let t = &base.device.timing;
            let consume = |tier: Tier| ts as f64 * t.t_core_per_byte * t.tiers.local_dram.read_bw / t.tiers.get(tier).read_bw;
            let e2e = |cc: bool| -> Result<f64, HarnessError> {
                let row = run_sweep(&SweepSpec { cache_control: cc, ..spec(ts, 1) })?.remove(0);
                Ok(row.lat_mean_ns + consume(if cc { Tier::Llc } else { Tier::LocalDram }))
            };
            let (mem, llc) = (e2e(false)?, e2e(true)?);
            PresetReport {
                name: "G3",
                title: "Control the data destination wisely",
                passed: llc < mem,
                conclusion: format!("copy plus consumer read of 16 KiB: {mem:.0} ns to memory, {llc:.0} ns to the LLC"),
                points: vec![point("cache_control=0", ts as f64 / mem), point("cache_control=1", ts as f64 / llc)],
            }
        }
        "G4" => {
            let tiered = |src, dst| SweepSpec { mode: SyncMode::Async, src_tier: src, dst_tier: dst, ..spec(4 << 10, 1) };
            let to_dram = thr(tiered(Tier::Cxl, Tier::LocalDram))?;
            let to_cxl = thr(tiered(Tier::LocalDram, Tier::Cxl))?;
            PresetReport {
                name: "G4",
                title: "Move data across heterogeneous memory",
                passed: to_dram > to_cxl,
                conclusion: format!("cxl->dram {to_dram:.2} GB/s, dram->cxl {to_cxl:.2} GB/s"),
                points: vec![point("cxl->local_dram", to_dram), point("local_dram->cxl", to_cxl)],
            }
        }
        "G5" => {
            let pes = |n| SweepSpec { mode: SyncMode::Async, n_engines: n, fault_p: 0.1, ..spec(1 << 10, 1) };
            let one = thr(pes(1))?;
            let four = thr(pes(4))?;
            PresetReport {
                name: "G5",
                title: "Leverage PE-level parallelism",
                passed: four >= 2.0 * one,
                conclusion: format!("1 KiB async with faults: 1 PE {one:.2} GB/s, 4 PEs {four:.2} GB/s"),
                points: vec![point("1 engine", one), point("4 engines", four)],
            }
        }
        "G6" => {
            let ts = 4u64 << 10;
            let async_spec = |bs| SweepSpec { mode: SyncMode::Async, ..spec(ts, bs) };
            let dwqs = thr(SweepSpec { n_wqs: 4, ..async_spec(1) })?;
            let batched = thr(async_spec(4))?;
            let mut points = vec![point("4 DWQs x 1 thread", dwqs), point("1 DWQ, bs=4", batched)];
            let mut swq16 = 0.0;
            for threads in [1usize, 4, 16] {
                let t = thr(SweepSpec { wq_mode: WqMode::Shared, threads: Some(threads), ..async_spec(1) })?;
                points.push(point(format!("1 SWQ x {threads} threads"), t));
                swq16 = t;
            }
            let close = (dwqs - batched).abs() <= 0.15 * dwqs.max(batched);
            let shared = swq16 >= dwqs.max(batched);
            PresetReport {
                name: "G6",
                title: "Optimize WQ configuration",
                passed: close && shared,
                conclusion: format!(
                    "DWQ configs {dwqs:.2} vs {batched:.2} GB/s (within 15%: {close}); 16-thread SWQ {swq16:.2} GB/s (matches: {shared})"
                ),
                points,
            }
        }
        _ => return Err(HarnessError::UnknownPreset(name.into())),
    };
    Ok(report)
}

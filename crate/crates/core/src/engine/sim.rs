//! Discrete-event model of one or more device instances sharing a socket.
//!
//! Virtual time is in ns. A dispatched descriptor first occupies one of its
//! engine's pipeline slots for a latency phase (descriptor fetch, address
//! translation, optional fault stall, memory latency), then enters the
//! engine's in-order data stage, whose duration is
//! `max(t_pe_fixed, bytes / rate)`. Streaming rates are recomputed whenever
//! the set of streaming transfers changes, so bandwidth is shared between
//! them as a processor-sharing fluid.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arbiter::Arbiter;
use super::exec::{execute, Outcome};
use super::telemetry::{Telemetry, WqTelemetry};
use super::{DeviceError, EnqueueOutcome};
use crate::completion::CompletionCell;
use crate::config::{PlatformConfig, Tier, WorkQueueConfig, WqMode};
use crate::descriptor::{
    self, validate, Address, BatchDescriptor, BufferId, CompletionRecord, Flags, OpParams, Opcode, Status,
    WorkDescriptor, DESCRIPTOR_BYTES,
};
use crate::memory::AddressSpace;
use crate::ops::DifMode;

/// Bytes below which a streaming transfer counts as finished.
const BYTE_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
enum EventKind {
    Arrive { dev: usize, job: u64 },
    LatencyDone { dev: usize, engine: usize, job: u64 },
    DataCheck { dev: usize, engine: usize, gen: u64 },
    BatchFetched { dev: usize, group: usize, job: u64 },
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Memory characteristics of one descriptor's accesses.
#[derive(Clone, Copy, Debug)]
struct Access {
    read_bw: f64,
    write_bw: f64,
    extra_latency: f64,
    llc_write: bool,
}

#[derive(Debug)]
struct BatchState {
    count: u32,
    done: u32,
    successes: u32,
    first_fail: Option<(u32, Status)>,
}

#[derive(Debug)]
enum JobKind {
    Plain,
    Batch(BatchState),
    Sub { parent: u64, index: u32, invalid: bool },
}

#[derive(Debug)]
struct Job {
    id: u64,
    wq: usize,
    desc: WorkDescriptor,
    kind: JobKind,
    cell: Option<Arc<CompletionCell>>,
    access: Access,
    ready: bool,
}

#[derive(Debug)]
struct Xfer {
    job: u64,
    remaining: f64,
    rate: f64,
    cap: f64,
    last: f64,
    start: f64,
    min_end: f64,
    streaming: bool,
    gen: u64,
    llc_bytes: u64,
}

#[derive(Debug)]
struct EngineState {
    group: usize,
    pipeline: VecDeque<u64>,
    active: Option<Xfer>,
    gen: u64,
}

#[derive(Debug)]
struct WqState {
    cfg: WorkQueueConfig,
    queue: VecDeque<u64>,
    occupancy: u32,
    owned: bool,
}

#[derive(Debug)]
struct GroupState {
    arbiter: Arbiter,
    wq_ids: Vec<usize>,
    engine_ids: Vec<usize>,
    rb_frac: f64,
    batch_busy: bool,
    subqueue: VecDeque<u64>,
}

#[derive(Debug)]
struct DevState {
    wqs: Vec<WqState>,
    groups: Vec<GroupState>,
    engines: Vec<EngineState>,
    rng: ChaCha8Rng,
    tel: Telemetry,
    in_flight: u64,
}

impl DevState {
    fn new(cfg: &PlatformConfig, instance: usize) -> Self {
        let dc = &cfg.device;
        let t = &dc.timing;
        let mut engines: Vec<EngineState> = (0..dc.n_engines)
            .map(|_| EngineState { group: usize::MAX, pipeline: VecDeque::new(), active: None, gen: 0 })
            .collect();
        let groups = dc
            .groups
            .iter()
            .enumerate()
            .map(|(g, gc)| {
                for &e in &gc.engine_ids {
                    engines[e].group = g;
                }
                let per_engine = gc.read_buffers as f64 / gc.engine_ids.len().max(1) as f64;
                let wq_ids: Vec<usize> = gc.wq_ids.iter().copied().collect();
                GroupState {
                    arbiter: Arbiter::new(wq_ids.iter().map(|&w| dc.wqs[w].priority as u32).collect()),
                    wq_ids,
                    engine_ids: gc.engine_ids.iter().copied().collect(),
                    rb_frac: (per_engine / t.rb_nominal as f64).min(1.0),
                    batch_busy: false,
                    subqueue: VecDeque::new(),
                }
            })
            .collect();
        let wqs = dc
            .wqs
            .iter()
            .map(|w| WqState { cfg: w.clone(), queue: VecDeque::new(), occupancy: 0, owned: false })
            .collect();
        let tel = Telemetry {
            instance,
            engine_busy_ns: vec![0.0; dc.n_engines],
            wqs: dc.wqs.iter().map(|w| WqTelemetry { entries: w.entries, ..Default::default() }).collect(),
            ..Default::default()
        };
        let seed = cfg.seed ^ (instance as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        DevState { wqs, groups, engines, rng: ChaCha8Rng::seed_from_u64(seed), tel, in_flight: 0 }
    }
}

pub(crate) struct Sim {
    pub cfg: PlatformConfig,
    pub now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    pub mem: AddressSpace,
    devices: Vec<DevState>,
    jobs: HashMap<u64, Job>,
    next_job: u64,
    completions: HashMap<u32, Arc<CompletionCell>>,
    next_slot: u32,
    free_slots: Vec<u32>,
}

impl Sim {
    pub fn new(cfg: PlatformConfig) -> Self {
        let devices = (0..cfg.n_devices).map(|i| DevState::new(&cfg, i)).collect();
        Sim {
            cfg,
            now: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            mem: AddressSpace::default(),
            devices,
            jobs: HashMap::new(),
            next_job: 1,
            completions: HashMap::new(),
            next_slot: 0,
            free_slots: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.events.is_empty() && self.jobs.is_empty()
    }

    /// Rebuilds device state from `cfg`, keeping memory and completion slots.
    pub fn reconfigure(&mut self, cfg: PlatformConfig) -> Result<(), DeviceError> {
        if !self.is_idle() {
            return Err(DeviceError::Busy);
        }
        self.devices = (0..cfg.n_devices).map(|i| DevState::new(&cfg, i)).collect();
        self.cfg = cfg;
        Ok(())
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.events.peek().map(|e| e.time)
    }

    pub fn step(&mut self) -> bool {
        let Some(ev) = self.events.pop() else {
            return false;
        };
        debug_assert!(ev.time >= self.now - 1e-6);
        self.now = self.now.max(ev.time);
        match ev.kind {
            EventKind::Arrive { dev, job } => self.on_arrive(dev, job),
            EventKind::LatencyDone { dev, engine, job } => {
                if let Some(j) = self.jobs.get_mut(&job) {
                    j.ready = true;
                }
                self.try_start_data(dev, engine);
            }
            EventKind::DataCheck { dev, engine, gen } => self.on_data_check(dev, engine, gen),
            EventKind::BatchFetched { dev, group, job } => self.on_batch_fetched(dev, group, job),
        }
        true
    }

    /// Processes every event up to `t` and moves the clock to `t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.next_event_time().is_some_and(|e| e <= t) {
            self.step();
        }
        self.now = self.now.max(t);
    }

    pub fn run_until_idle(&mut self) {
        while self.step() {}
    }

    // ---- completion slots -------------------------------------------------

    pub fn alloc_completion(&mut self) -> (Address, Arc<CompletionCell>) {
        let slot = self.free_slots.pop().unwrap_or_else(|| {
            self.next_slot += 1;
            self.next_slot - 1
        });
        let cell = Arc::new(CompletionCell::new());
        self.completions.insert(slot, cell.clone());
        (Address::new(BufferId::COMPLETION, slot), cell)
    }

    pub fn free_completion(&mut self, addr: Address) {
        if addr.buffer() == BufferId::COMPLETION && self.completions.remove(&addr.offset()).is_some() {
            self.free_slots.push(addr.offset());
        }
    }

    pub fn completion_cell(&self, addr: Address) -> Option<Arc<CompletionCell>> {
        if addr.buffer() != BufferId::COMPLETION {
            return None;
        }
        self.completions.get(&addr.offset()).cloned()
    }

    pub fn completion_slots(&self) -> usize {
        self.completions.len()
    }

    // ---- ownership and telemetry -----------------------------------------

    fn wq_mut(&mut self, dev: usize, wq: usize) -> Result<&mut WqState, DeviceError> {
        self.devices
            .get_mut(dev)
            .ok_or(DeviceError::UnknownInstance(dev))?
            .wqs
            .get_mut(wq)
            .ok_or(DeviceError::UnknownWq(wq))
    }

    pub fn wq_mode(&self, dev: usize, wq: usize) -> Result<WqMode, DeviceError> {
        let d = self.devices.get(dev).ok_or(DeviceError::UnknownInstance(dev))?;
        Ok(d.wqs.get(wq).ok_or(DeviceError::UnknownWq(wq))?.cfg.mode)
    }

    pub fn claim_dwq(&mut self, dev: usize, wq: usize) -> Result<(), DeviceError> {
        let w = self.wq_mut(dev, wq)?;
        if w.cfg.mode != WqMode::Dedicated {
            return Ok(());
        }
        if w.owned {
            return Err(DeviceError::PortalOwned(wq));
        }
        w.owned = true;
        Ok(())
    }

    pub fn release_dwq(&mut self, dev: usize, wq: usize) {
        if let Ok(w) = self.wq_mut(dev, wq) {
            w.owned = false;
        }
    }

    pub fn add_wait(&mut self, dev: usize, ns: f64, blocked: bool) {
        if let Some(d) = self.devices.get_mut(dev) {
            if blocked {
                d.tel.wait_state_ns += ns;
            } else {
                d.tel.busy_poll_ns += ns;
            }
        }
    }

    pub fn telemetry(&self) -> Vec<Telemetry> {
        self.devices
            .iter()
            .map(|d| {
                let mut t = d.tel.clone();
                t.elapsed_ns = self.now;
                t
            })
            .collect()
    }

    /// Descriptors accepted but not yet complete, per instance.
    pub fn in_flight(&self, dev: usize) -> u64 {
        self.devices.get(dev).map_or(0, |d| d.in_flight)
    }

    pub fn wq_occupancy(&self, dev: usize, wq: usize) -> Option<u32> {
        self.devices.get(dev)?.wqs.get(wq).map(|w| w.occupancy)
    }

    // ---- submission ---------------------------------------------------------

    /// Submits one serialized descriptor at client time `at`.
    pub fn enqueue(
        &mut self,
        dev: usize,
        wq: usize,
        bytes: &[u8],
        dedicated: bool,
        at: f64,
    ) -> Result<EnqueueOutcome, DeviceError> {
        let mode = self.wq_mode(dev, wq)?;
        if (mode == WqMode::Dedicated) != dedicated {
            return Err(DeviceError::WrongPortalKind(wq));
        }
        let t = &self.cfg.device.timing;
        let cost = if dedicated { t.t_submit_dwq } else { t.t_submit_swq_roundtrip };
        let start = at.max(self.now);
        let desc = descriptor::deserialize(bytes)?;

        let cell = if desc.wants_completion() { self.completion_cell(desc.completion) } else { None };
        if let Err(v) = validate(&desc, &self.cfg.device) {
            let d = &mut self.devices[dev];
            d.tel.invalid_descriptors += 1;
            if let Some(c) = &cell {
                c.publish(CompletionRecord {
                    status: Status::InvalidDescriptor,
                    timestamp_done: start + cost,
                    ..Default::default()
                });
            }
            return Err(DeviceError::Invalid(v));
        }
        if desc.wants_completion() {
            match &cell {
                None => return Err(DeviceError::UnknownCompletion(desc.completion)),
                Some(c) if c.is_done() => return Err(DeviceError::CompletionInUse(desc.completion)),
                _ => {}
            }
        }

        let d = &mut self.devices[dev];
        let w = &mut d.wqs[wq];
        if w.occupancy >= w.cfg.entries {
            if dedicated {
                return Err(DeviceError::DwqFull(wq));
            }
            d.tel.retries += 1;
            d.tel.wqs[wq].retries += 1;
            return Ok(EnqueueOutcome::Retry { at: start + cost });
        }
        w.occupancy += 1;
        let wt = &mut d.tel.wqs[wq];
        wt.accepted += 1;
        wt.max_occupancy = wt.max_occupancy.max(w.occupancy);
        d.in_flight += 1;

        let id = self.next_job;
        self.next_job += 1;
        let kind = match BatchDescriptor::try_from(&desc) {
            Ok(b) => JobKind::Batch(BatchState { count: b.count, done: 0, successes: 0, first_fail: None }),
            Err(_) => JobKind::Plain,
        };
        let access = self.access(&desc);
        self.jobs.insert(id, Job { id, wq, desc, kind, cell, access, ready: false });
        self.push(start + cost, EventKind::Arrive { dev, job: id });
        Ok(EnqueueOutcome::Accepted { desc_id: id, at: start + cost })
    }

    fn tier_of(&self, addr: Address) -> Tier {
        self.mem.tier(addr.buffer()).unwrap_or(Tier::LocalDram)
    }

    fn access(&self, d: &WorkDescriptor) -> Access {
        let tiers = &self.cfg.device.timing.tiers;
        let cache = d.flags.contains(Flags::CACHE_CONTROL);
        let write_tier = |a: Address| if cache { Tier::Llc } else { self.tier_of(a) };
        let mut reads: Vec<Tier> = Vec::with_capacity(2);
        let mut writes: Vec<Tier> = Vec::with_capacity(2);
        match (d.opcode, &d.params) {
            (Opcode::MemCopy, _) => {
                reads.push(self.tier_of(d.src));
                writes.push(write_tier(d.dst));
            }
            (Opcode::MemFill, _) => writes.push(write_tier(d.dst)),
            (Opcode::Compare, _) | (Opcode::CreateDelta, _) => {
                reads.push(self.tier_of(d.src));
                reads.push(self.tier_of(d.dst));
            }
            (Opcode::ComparePattern, _) => reads.push(self.tier_of(d.src)),
            (Opcode::CacheFlush, _) => reads.push(self.tier_of(d.dst)),
            (Opcode::CrcGen, _) => {
                reads.push(self.tier_of(d.src));
                if !d.dst.is_null() {
                    writes.push(write_tier(d.dst));
                }
            }
            (Opcode::Dualcast, OpParams::Dualcast { dst2 }) => {
                reads.push(self.tier_of(d.src));
                writes.push(write_tier(d.dst));
                writes.push(write_tier(*dst2));
            }
            (Opcode::Dif, OpParams::Dif(p)) => {
                reads.push(self.tier_of(d.src));
                if p.mode != DifMode::Check {
                    writes.push(write_tier(d.dst));
                }
            }
            (Opcode::ApplyDelta, _) => {
                reads.push(self.tier_of(d.src));
                writes.push(write_tier(d.dst));
            }
            _ => {}
        }
        let min_bw = |ts: &[Tier], f: fn(&crate::config::TierParams) -> f64| {
            ts.iter().map(|&t| f(tiers.get(t))).fold(f64::INFINITY, f64::min)
        };
        let extra = reads.iter().chain(&writes).map(|&t| tiers.get(t).extra_latency).fold(0.0, f64::max);
        Access {
            read_bw: min_bw(&reads, |p| p.read_bw),
            write_bw: min_bw(&writes, |p| p.write_bw),
            extra_latency: extra,
            llc_write: writes.contains(&Tier::Llc),
        }
    }

    // ---- event handlers ---------------------------------------------------------

    fn group_of_wq(&self, dev: usize, wq: usize) -> usize {
        self.devices[dev].wqs[wq].cfg.group_id
    }

    fn on_arrive(&mut self, dev: usize, job: u64) {
        let wq = self.jobs[&job].wq;
        self.devices[dev].wqs[wq].queue.push_back(job);
        let g = self.group_of_wq(dev, wq);
        self.try_dispatch(dev, g);
    }

    fn pick_engine(&self, dev: usize, group: usize) -> Option<usize> {
        let depth = self.cfg.device.timing.pe_pipeline_depth as usize;
        let d = &self.devices[dev];
        d.groups[group]
            .engine_ids
            .iter()
            .copied()
            .filter(|&e| d.engines[e].pipeline.len() < depth)
            .min_by_key(|&e| (d.engines[e].pipeline.len(), e))
    }

    fn try_dispatch(&mut self, dev: usize, group: usize) {
        loop {
            let mut progressed = self.dispatch_subs(dev, group);

            let engine = self.pick_engine(dev, group);
            let g = &self.devices[dev].groups[group];
            let sub_cap = g.engine_ids.len() * self.cfg.device.timing.pe_pipeline_depth as usize;
            let batch_ok = !g.batch_busy && g.subqueue.len() < sub_cap;
            let eligible: Vec<bool> = g
                .wq_ids
                .iter()
                .map(|&w| match self.devices[dev].wqs[w].queue.front() {
                    None => false,
                    Some(j) => match self.jobs[j].kind {
                        JobKind::Batch(_) => batch_ok,
                        _ => engine.is_some(),
                    },
                })
                .collect();
            let g = &mut self.devices[dev].groups[group];
            if let Some(slot) = g.arbiter.next(|i| eligible[i]) {
                let wq = g.wq_ids[slot];
                let w = &mut self.devices[dev].wqs[wq];
                let job = w.queue.pop_front().expect("eligible queue is non-empty");
                w.occupancy -= 1;
                if matches!(self.jobs[&job].kind, JobKind::Batch(_)) {
                    self.devices[dev].groups[group].batch_busy = true;
                    let t = self.now + self.cfg.device.timing.t_batch_fetch;
                    self.push(t, EventKind::BatchFetched { dev, group, job });
                } else {
                    self.start_job(dev, engine.expect("eligible"), job, true);
                }
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }

    /// Moves sub-descriptors from the group's batch queue onto engines.
    fn dispatch_subs(&mut self, dev: usize, group: usize) -> bool {
        let mut progressed = false;
        while let Some(&head) = self.devices[dev].groups[group].subqueue.front() {
            let job = &self.jobs[&head];
            let JobKind::Sub { parent, index, invalid } = job.kind else {
                unreachable!("only sub-descriptors are queued here")
            };
            if invalid {
                self.devices[dev].groups[group].subqueue.pop_front();
                self.devices[dev].tel.invalid_descriptors += 1;
                self.complete_job(dev, head, Outcome::of_status(Status::InvalidDescriptor));
                progressed = true;
                continue;
            }
            if job.desc.flags.contains(Flags::FENCE) {
                let JobKind::Batch(b) = &self.jobs[&parent].kind else { unreachable!() };
                if b.done < index {
                    break;
                }
                if b.first_fail.is_some() {
                    self.devices[dev].groups[group].subqueue.pop_front();
                    self.complete_job(dev, head, Outcome::of_status(Status::Abandoned));
                    progressed = true;
                    continue;
                }
            }
            let Some(engine) = self.pick_engine(dev, group) else {
                break;
            };
            self.devices[dev].groups[group].subqueue.pop_front();
            self.start_job(dev, engine, head, false);
            progressed = true;
        }
        progressed
    }

    fn start_job(&mut self, dev: usize, engine: usize, job: u64, fetch: bool) {
        let t = &self.cfg.device.timing;
        let mut latency = t.t_translate + self.jobs[&job].access.extra_latency;
        if fetch {
            latency += t.t_desc_fetch;
        }
        let p = self.cfg.device.fault.stall_probability;
        let t_fault = self.cfg.device.fault.t_fault;
        let d = &mut self.devices[dev];
        if p > 0.0 && d.rng.gen::<f64>() < p {
            latency += t_fault;
            d.tel.faults_injected += 1;
        }
        d.engines[engine].pipeline.push_back(job);
        self.push(self.now + latency, EventKind::LatencyDone { dev, engine, job });
    }

    fn try_start_data(&mut self, dev: usize, engine: usize) {
        let e = &self.devices[dev].engines[engine];
        if e.active.is_some() {
            return;
        }
        let Some(&head) = e.pipeline.front() else {
            return;
        };
        let job = &self.jobs[&head];
        if !job.ready {
            return;
        }
        let t = &self.cfg.device.timing;
        let rb_frac = self.devices[dev].groups[e.group].rb_frac;
        let a = job.access;
        let bytes = job.desc.transfer_size as f64;
        let cap = (t.b_pe_max * rb_frac).min(a.read_bw).min(a.write_bw);
        let now = self.now;
        let min_end = now + t.t_pe_fixed;
        let llc_bytes = if a.llc_write { job.desc.transfer_size } else { 0 };
        let e = &mut self.devices[dev].engines[engine];
        e.gen += 1;
        let gen = e.gen;
        e.active = Some(Xfer {
            job: head,
            remaining: bytes,
            rate: 0.0,
            cap,
            last: now,
            start: now,
            min_end,
            streaming: bytes > BYTE_EPS,
            gen,
            llc_bytes,
        });
        if bytes <= BYTE_EPS {
            self.push(min_end, EventKind::DataCheck { dev, engine, gen });
        }
        self.reshare();
    }

    /// Recomputes the rate of every streaming transfer on the socket.
    fn reshare(&mut self) {
        let now = self.now;
        let mut total = 0usize;
        let mut llc_bytes = 0u64;
        let mut per_dev = vec![0usize; self.devices.len()];
        for (i, d) in self.devices.iter_mut().enumerate() {
            for e in &mut d.engines {
                if let Some(x) = e.active.as_mut().filter(|x| x.streaming) {
                    x.remaining = (x.remaining - x.rate * (now - x.last)).max(0.0);
                    x.last = now;
                    per_dev[i] += 1;
                    total += 1;
                    llc_bytes += x.llc_bytes;
                }
            }
        }
        if total == 0 {
            return;
        }
        let b_fabric = self.cfg.device.timing.b_fabric;
        let socket = match &self.cfg.ddio {
            Some(dd) if llc_bytes > dd.footprint_bytes => dd.degraded_bw.min(self.cfg.socket_bw),
            _ => self.cfg.socket_bw,
        };
        let socket_share = socket / total as f64;
        let mut pending = Vec::new();
        for (i, d) in self.devices.iter_mut().enumerate() {
            let mut aggregate = 0.0;
            for (ei, e) in d.engines.iter_mut().enumerate() {
                let EngineState { active, gen: egen, .. } = e;
                let Some(x) = active.as_mut().filter(|x| x.streaming) else {
                    continue;
                };
                let rate = x.cap.min(b_fabric / per_dev[i] as f64).min(socket_share);
                aggregate += rate;
                if rate != x.rate {
                    x.rate = rate;
                    *egen += 1;
                    x.gen = *egen;
                    pending.push((now + x.remaining / rate, i, ei, x.gen));
                }
            }
            d.tel.peak_rate = d.tel.peak_rate.max(aggregate);
        }
        for (t, dev, engine, gen) in pending {
            self.push(t, EventKind::DataCheck { dev, engine, gen });
        }
    }

    fn on_data_check(&mut self, dev: usize, engine: usize, gen: u64) {
        let now = self.now;
        let EngineState { active, gen: egen, .. } = &mut self.devices[dev].engines[engine];
        let Some(x) = active.as_mut().filter(|x| x.gen == gen) else {
            return;
        };
        if x.streaming {
            x.remaining = (x.remaining - x.rate * (now - x.last)).max(0.0);
            x.last = now;
            if x.remaining > BYTE_EPS {
                let t = now + x.remaining / x.rate;
                self.push(t, EventKind::DataCheck { dev, engine, gen });
                return;
            }
            x.streaming = false;
            x.remaining = 0.0;
            if now < x.min_end {
                *egen += 1;
                x.gen = *egen;
                let (t, g) = (x.min_end, x.gen);
                self.push(t, EventKind::DataCheck { dev, engine, gen: g });
                self.reshare();
                return;
            }
        }
        self.finish_data(dev, engine);
        self.reshare();
    }

    fn finish_data(&mut self, dev: usize, engine: usize) {
        let d = &mut self.devices[dev];
        let e = &mut d.engines[engine];
        let x = e.active.take().expect("active transfer");
        let popped = e.pipeline.pop_front();
        debug_assert_eq!(popped, Some(x.job));
        d.tel.engine_busy_ns[engine] += self.now - x.start;
        let group = e.group;

        let outcome = if self.cfg.functional {
            execute(&self.jobs[&x.job].desc, &mut self.mem)
        } else {
            Outcome::assumed(&self.jobs[&x.job].desc)
        };
        self.complete_job(dev, x.job, outcome);
        self.try_start_data(dev, engine);
        self.try_dispatch(dev, group);
    }

    fn on_batch_fetched(&mut self, dev: usize, group: usize, job: u64) {
        self.devices[dev].groups[group].batch_busy = false;
        let (array, count, wq) = {
            let j = &self.jobs[&job];
            (j.desc.src, j.desc.transfer_size, j.wq)
        };
        let bytes = match self.mem.region(array, count * DESCRIPTOR_BYTES as u64) {
            Ok(b) => b.to_vec(),
            Err(at) => {
                let rec = Outcome { fault_addr: Some(at), ..Outcome::of_status(Status::PartialPageFault) };
                self.complete_job(dev, job, rec);
                self.try_dispatch(dev, group);
                return;
            }
        };
        for (index, raw) in bytes.chunks_exact(DESCRIPTOR_BYTES).enumerate() {
            let parsed = descriptor::deserialize(raw).ok();
            let (desc, mut invalid) = match parsed {
                Some(d) => {
                    let bad = d.is_batch() || validate(&d, &self.cfg.device).is_err();
                    (d, bad)
                }
                None => (WorkDescriptor::new(Opcode::MemCopy), true),
            };
            let cell = if desc.wants_completion() { self.completion_cell(desc.completion) } else { None };
            if desc.wants_completion() && cell.as_ref().is_none_or(|c| c.is_done()) {
                invalid = true;
            }
            let id = self.next_job;
            self.next_job += 1;
            let access = self.access(&desc);
            let kind = JobKind::Sub { parent: job, index: index as u32, invalid };
            self.jobs.insert(id, Job { id, wq, desc, kind, cell, access, ready: false });
            self.devices[dev].groups[group].subqueue.push_back(id);
        }
        self.try_dispatch(dev, group);
    }

    fn complete_job(&mut self, dev: usize, id: u64, out: Outcome) {
        let job = self.jobs.remove(&id).expect("job exists");
        let d = &mut self.devices[dev];
        d.tel.descriptors_completed += 1;
        d.tel.bytes_read += out.read;
        d.tel.bytes_written += out.written;
        d.tel.bytes_flushed += out.flushed;
        let record = CompletionRecord {
            status: out.status,
            bytes_completed: out.bytes_completed,
            result: out.result,
            fault_addr: out.fault_addr,
            timestamp_done: self.now,
            desc_id: job.id,
        };
        debug_assert!(record.bytes_completed <= job.desc.transfer_size || job.desc.is_batch());
        match job.kind {
            JobKind::Sub { parent, index, .. } => {
                if let Some(c) = &job.cell {
                    c.publish(record);
                }
                let Some(JobKind::Batch(b)) = self.jobs.get_mut(&parent).map(|p| &mut p.kind) else {
                    unreachable!("parent outlives its subs")
                };
                b.done += 1;
                if out.status.is_success() {
                    b.successes += 1;
                } else if b.first_fail.is_none() {
                    b.first_fail = Some((index, out.status));
                }
                if b.done == b.count {
                    let out = match b.first_fail {
                        None => Outcome { bytes_completed: b.successes as u64, ..Outcome::of_status(Status::Success) },
                        Some((i, s)) => Outcome {
                            bytes_completed: b.successes as u64,
                            result: i as u64,
                            ..Outcome::of_status(s)
                        },
                    };
                    self.complete_job(dev, parent, out);
                }
            }
            JobKind::Plain | JobKind::Batch(_) => {
                if matches!(job.kind, JobKind::Batch(_)) {
                    d.tel.batches_completed += 1;
                    d.tel.descriptors_completed -= 1;
                }
                d.tel.wqs[job.wq].completed += 1;
                d.in_flight -= 1;
                if let Some(c) = &job.cell {
                    c.publish(record);
                }
            }
        }
    }
}

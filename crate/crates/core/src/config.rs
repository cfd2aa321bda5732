//! Device topology, limits and the timing model.
//!
//! Times are in nanoseconds and bandwidths in bytes per nanosecond, which is
//! numerically the same as GB/s.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("WQ {wq} references missing group {group}")]
    MissingGroup { wq: usize, group: usize },
    #[error("WQ {0} is listed by more than one group")]
    WqInSeveralGroups(usize),
    #[error("WQ {wq} claims group {claimed} but is listed by group {listed}")]
    WqGroupMismatch { wq: usize, claimed: usize, listed: usize },
    #[error("WQ {0} is not listed by any group")]
    WqUnlisted(usize),
    #[error("group {group} lists unknown WQ {wq}")]
    UnknownWq { group: usize, wq: usize },
    #[error("engine {0} does not exist")]
    UnknownEngine(usize),
    #[error("engine {0} is in more than one group")]
    EngineInSeveralGroups(usize),
    #[error("engine {0} is not in any group")]
    EngineUnassigned(usize),
    #[error("group {0} has work queues but no engines")]
    GroupWithoutEngines(usize),
    #[error("device needs at least one engine")]
    NoEngines,
    #[error("WQ {0} needs at least one entry")]
    ZeroEntries(usize),
    #[error("WQ entries total {total} exceeds device capacity {cap}")]
    TooManyEntries { total: u32, cap: u32 },
    #[error("WQ {wq} priority {priority} outside 1..=15")]
    Priority { wq: usize, priority: u8 },
    #[error("read buffers total {total} exceeds device capacity {cap}")]
    TooManyReadBuffers { total: u32, cap: u32 },
    #[error("timing parameter {0} must be positive")]
    Timing(&'static str),
    #[error("fabric bandwidth must be at least the engine bandwidth")]
    FabricBelowEngine,
    #[error("fault probability {0} outside [0, 1]")]
    FaultProbability(f64),
    #[error("batch and transfer limits must be positive")]
    Limits,
    #[error("at least one device instance required")]
    NoDevices,
    #[error("config file: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WqMode {
    Dedicated,
    Shared,
}

impl WqMode {
    pub fn name(self) -> &'static str {
        match self {
            WqMode::Dedicated => "dwq",
            WqMode::Shared => "swq",
        }
    }
}

impl FromStr for WqMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dwq" | "dedicated" => Ok(WqMode::Dedicated),
            "swq" | "shared" => Ok(WqMode::Shared),
            _ => Err(ConfigError::Parse(format!("unknown WQ mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkQueueConfig {
    pub mode: WqMode,
    pub entries: u32,
    pub priority: u8,
    pub group_id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub wq_ids: BTreeSet<usize>,
    pub engine_ids: BTreeSet<usize>,
    pub read_buffers: u32,
}

/// Memory tiers a buffer can live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    LocalDram,
    RemoteDram,
    Cxl,
    Llc,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::LocalDram, Tier::RemoteDram, Tier::Cxl, Tier::Llc];

    pub fn name(self) -> &'static str {
        match self {
            Tier::LocalDram => "local_dram",
            Tier::RemoteDram => "remote_dram",
            Tier::Cxl => "cxl",
            Tier::Llc => "llc",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .or(match s {
                "local" | "dram" => Some(Tier::LocalDram),
                "remote" => Some(Tier::RemoteDram),
                _ => None,
            })
            .ok_or_else(|| ConfigError::Parse(format!("unknown tier {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierParams {
    pub read_bw: f64,
    pub write_bw: f64,
    pub extra_latency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tiers {
    pub local_dram: TierParams,
    pub remote_dram: TierParams,
    pub cxl: TierParams,
    pub llc: TierParams,
}

impl Tiers {
    pub fn get(&self, tier: Tier) -> &TierParams {
        match tier {
            Tier::LocalDram => &self.local_dram,
            Tier::RemoteDram => &self.remote_dram,
            Tier::Cxl => &self.cxl,
            Tier::Llc => &self.llc,
        }
    }

    fn get_mut(&mut self, tier: Tier) -> &mut TierParams {
        match tier {
            Tier::LocalDram => &mut self.local_dram,
            Tier::RemoteDram => &mut self.remote_dram,
            Tier::Cxl => &mut self.cxl,
            Tier::Llc => &mut self.llc,
        }
    }
}

impl Default for Tiers {
    fn default() -> Self {
        Tiers {
            local_dram: TierParams { read_bw: 100.0, write_bw: 80.0, extra_latency: 50.0 },
            remote_dram: TierParams { read_bw: 60.0, write_bw: 50.0, extra_latency: 150.0 },
            cxl: TierParams { read_bw: 20.0, write_bw: 12.0, extra_latency: 400.0 },
            llc: TierParams { read_bw: 200.0, write_bw: 200.0, extra_latency: 10.0 },
        }
    }
}

/// Cost parameters for the discrete-event clock. Calibration knobs, not
/// hardware measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    /// Posted 64-byte store to a dedicated portal.
    pub t_submit_dwq: f64,
    /// Non-posted enqueue to a shared portal, including the status return.
    pub t_submit_swq_roundtrip: f64,
    pub t_desc_fetch: f64,
    pub t_batch_fetch: f64,
    pub t_translate: f64,
    /// Minimum engine data-stage occupancy per descriptor.
    pub t_pe_fixed: f64,
    pub b_pe_max: f64,
    pub b_fabric: f64,
    /// Read buffers an engine needs to reach `b_pe_max`.
    pub rb_nominal: u32,
    /// Descriptors an engine holds in flight (latency phase overlap).
    pub pe_pipeline_depth: u32,
    pub tiers: Tiers,
    pub t_core_fixed: f64,
    pub t_core_per_byte: f64,
    /// Client-side descriptor allocation, reported but never part of throughput.
    pub t_alloc: f64,
    /// Client-side descriptor preparation per descriptor.
    pub t_prepare: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            t_submit_dwq: 30.0,
            t_submit_swq_roundtrip: 80.0,
            t_desc_fetch: 250.0,
            t_batch_fetch: 400.0,
            t_translate: 50.0,
            t_pe_fixed: 300.0,
            b_pe_max: 30.0,
            b_fabric: 30.0,
            rb_nominal: 8,
            pe_pipeline_depth: 4,
            tiers: Tiers::default(),
            t_core_fixed: 20.0,
            t_core_per_byte: 0.125,
            t_alloc: 400.0,
            t_prepare: 5.0,
        }
    }
}

impl TimingModel {
    fn check(&self) -> Result<(), ConfigError> {
        let fields = [
            ("t_submit_dwq", self.t_submit_dwq),
            ("t_submit_swq_roundtrip", self.t_submit_swq_roundtrip),
            ("t_desc_fetch", self.t_desc_fetch),
            ("t_batch_fetch", self.t_batch_fetch),
            ("t_translate", self.t_translate),
            ("t_pe_fixed", self.t_pe_fixed),
            ("b_pe_max", self.b_pe_max),
            ("b_fabric", self.b_fabric),
            ("t_core_fixed", self.t_core_fixed),
            ("t_core_per_byte", self.t_core_per_byte),
            ("t_alloc", self.t_alloc),
            ("t_prepare", self.t_prepare),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Timing(name));
            }
        }
        for t in Tier::ALL {
            let p = self.tiers.get(t);
            if !(p.read_bw > 0.0 && p.write_bw > 0.0 && p.extra_latency > 0.0) {
                return Err(ConfigError::Timing("tier"));
            }
        }
        if self.rb_nominal == 0 {
            return Err(ConfigError::Timing("rb_nominal"));
        }
        if self.pe_pipeline_depth == 0 {
            return Err(ConfigError::Timing("pe_pipeline_depth"));
        }
        if self.b_fabric < self.b_pe_max {
            return Err(ConfigError::FabricBelowEngine);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub stall_probability: f64,
    /// Stall added to a faulting descriptor, ns.
    pub t_fault: f64,
}

impl Default for FaultModel {
    fn default() -> Self {
        FaultModel { stall_probability: 0.0, t_fault: 5000.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub groups: Vec<GroupConfig>,
    pub wqs: Vec<WorkQueueConfig>,
    pub n_engines: usize,
    pub max_batch_size: u32,
    pub max_transfer_size: u64,
    pub total_wq_entries: u32,
    pub total_read_buffers: u32,
    pub timing: TimingModel,
    pub fault: FaultModel,
}

impl Default for DeviceConfig {
    /// 8 dedicated WQs of 16 entries and 4 engines in one group.
    fn default() -> Self {
        DeviceConfig::single_group(8, WqMode::Dedicated, 16, 4)
    }
}

impl DeviceConfig {
    pub const DEFAULT_WQ_CAPACITY: u32 = 128;

    /// One group holding every WQ and engine.
    pub fn single_group(n_wqs: usize, mode: WqMode, entries: u32, n_engines: usize) -> Self {
        let timing = TimingModel::default();
        let read_buffers = timing.rb_nominal * n_engines as u32;
        DeviceConfig {
            groups: vec![GroupConfig {
                wq_ids: (0..n_wqs).collect(),
                engine_ids: (0..n_engines).collect(),
                read_buffers,
            }],
            wqs: (0..n_wqs)
                .map(|_| WorkQueueConfig { mode, entries, priority: 1, group_id: 0 })
                .collect(),
            n_engines,
            max_batch_size: 1024,
            max_transfer_size: 2 << 30,
            total_wq_entries: Self::DEFAULT_WQ_CAPACITY.max(entries * n_wqs as u32),
            total_read_buffers: read_buffers.max(32),
            timing,
            fault: FaultModel::default(),
        }
    }

    /// `n` groups, each with one WQ and one engine.
    pub fn group_per_wq(n: usize, mode: WqMode, entries: u32) -> Self {
        let timing = TimingModel::default();
        DeviceConfig {
            groups: (0..n)
                .map(|i| GroupConfig {
                    wq_ids: [i].into(),
                    engine_ids: [i].into(),
                    read_buffers: timing.rb_nominal,
                })
                .collect(),
            wqs: (0..n)
                .map(|i| WorkQueueConfig { mode, entries, priority: 1, group_id: i })
                .collect(),
            n_engines: n,
            total_wq_entries: Self::DEFAULT_WQ_CAPACITY.max(entries * n as u32),
            total_read_buffers: (timing.rb_nominal * n as u32).max(32),
            timing,
            ..DeviceConfig::single_group(1, mode, entries, 1)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_engines == 0 {
            return Err(ConfigError::NoEngines);
        }
        if self.max_batch_size < 2 || self.max_transfer_size == 0 {
            return Err(ConfigError::Limits);
        }
        self.timing.check()?;
        if !(0.0..=1.0).contains(&self.fault.stall_probability) {
            return Err(ConfigError::FaultProbability(self.fault.stall_probability));
        }
        if !(self.fault.t_fault >= 0.0) {
            return Err(ConfigError::Timing("t_fault"));
        }

        let mut wq_owner: Vec<Option<usize>> = vec![None; self.wqs.len()];
        let mut engine_owner: Vec<Option<usize>> = vec![None; self.n_engines];
        for (g, group) in self.groups.iter().enumerate() {
            for &wq in &group.wq_ids {
                let slot = wq_owner.get_mut(wq).ok_or(ConfigError::UnknownWq { group: g, wq })?;
                if slot.replace(g).is_some() {
                    return Err(ConfigError::WqInSeveralGroups(wq));
                }
            }
            for &e in &group.engine_ids {
                let slot = engine_owner.get_mut(e).ok_or(ConfigError::UnknownEngine(e))?;
                if slot.replace(g).is_some() {
                    return Err(ConfigError::EngineInSeveralGroups(e));
                }
            }
            if !group.wq_ids.is_empty() && group.engine_ids.is_empty() {
                return Err(ConfigError::GroupWithoutEngines(g));
            }
        }
        for (i, wq) in self.wqs.iter().enumerate() {
            if wq.group_id >= self.groups.len() {
                return Err(ConfigError::MissingGroup { wq: i, group: wq.group_id });
            }
            match wq_owner[i] {
                None => return Err(ConfigError::WqUnlisted(i)),
                Some(g) if g != wq.group_id => {
                    return Err(ConfigError::WqGroupMismatch { wq: i, claimed: wq.group_id, listed: g })
                }
                _ => {}
            }
            if wq.entries == 0 {
                return Err(ConfigError::ZeroEntries(i));
            }
            if !(1..=15).contains(&wq.priority) {
                return Err(ConfigError::Priority { wq: i, priority: wq.priority });
            }
        }
        if let Some(e) = engine_owner.iter().position(Option::is_none) {
            return Err(ConfigError::EngineUnassigned(e));
        }
        let total: u32 = self.wqs.iter().map(|w| w.entries).sum();
        if total > self.total_wq_entries {
            return Err(ConfigError::TooManyEntries { total, cap: self.total_wq_entries });
        }
        let rb: u32 = self.groups.iter().map(|g| g.read_buffers).sum();
        if rb > self.total_read_buffers {
            return Err(ConfigError::TooManyReadBuffers { total: rb, cap: self.total_read_buffers });
        }
        Ok(())
    }
}

/// Write-allocating DMA capacity of the shared cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdioConfig {
    /// In-flight cache-allocating write bytes the cache can absorb.
    pub footprint_bytes: u64,
    /// Socket bandwidth once the footprint is exceeded.
    pub degraded_bw: f64,
}

/// One or more identical device instances sharing a socket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub device: DeviceConfig,
    pub n_devices: usize,
    pub socket_bw: f64,
    pub ddio: Option<DdioConfig>,
    pub seed: u64,
    /// Execute data operations on the emulated memory. When off, only the
    /// timing model runs and every descriptor is assumed to succeed.
    pub functional: bool,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig::single(DeviceConfig::default())
    }
}

impl PlatformConfig {
    pub fn single(device: DeviceConfig) -> Self {
        PlatformConfig { device, n_devices: 1, socket_bw: 120.0, ddio: None, seed: 0, functional: true }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_devices == 0 {
            return Err(ConfigError::NoDevices);
        }
        if !(self.socket_bw > 0.0) {
            return Err(ConfigError::Timing("socket_bw"));
        }
        if let Some(d) = &self.ddio {
            if !(d.degraded_bw > 0.0) {
                return Err(ConfigError::Timing("ddio_bw"));
            }
        }
        self.device.validate()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_ini_str(&text)
    }

    /// Parses the INI format:
    ///
    /// ```ini
    /// [device]
    /// engines = 4
    /// [platform]
    /// devices = 2
    /// [group.0]
    /// wqs = 0,1
    /// engines = 0,1,2,3
    /// read_buffers = 32
    /// [wq.0]
    /// mode = shared
    /// entries = 32
    /// priority = 3
    /// group = 0
    /// [timing]
    /// t_pe_fixed = 250
    /// [tier.cxl]
    /// read_bw = 18
    /// [fault]
    /// stall_probability = 0.1
    /// ```
    ///
    /// Keys not given keep their defaults. If any `group.N` or `wq.N`
    /// section is present, the topology is taken entirely from the file.
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut cfg = PlatformConfig::default();
        let mut groups: Vec<(usize, GroupConfig)> = Vec::new();
        let mut wqs: Vec<(usize, WorkQueueConfig)> = Vec::new();

        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError::Parse(format!("key {k:?} outside a section")));
                }
                continue;
            };
            let (kind, index) = match section.split_once('.') {
                Some((k, i)) => (k, Some(i)),
                None => (section, None),
            };
            for (key, value) in props.iter() {
                let bad = || ConfigError::Parse(format!("[{section}] {key} = {value:?}"));
                let num = || value.trim().parse::<f64>().map_err(|_| bad());
                let int = || value.trim().parse::<u64>().map_err(|_| bad());
                let list = || -> Result<BTreeSet<usize>, ConfigError> {
                    value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| bad()))
                        .collect()
                };
                match (kind, key) {
                    ("device", "engines") => cfg.device.n_engines = int()? as usize,
                    ("device", "max_batch_size") => cfg.device.max_batch_size = int()? as u32,
                    ("device", "max_transfer_size") => cfg.device.max_transfer_size = int()?,
                    ("device", "total_wq_entries") => cfg.device.total_wq_entries = int()? as u32,
                    ("device", "total_read_buffers") => cfg.device.total_read_buffers = int()? as u32,
                    ("platform", "devices") => cfg.n_devices = int()? as usize,
                    ("platform", "socket_bw") => cfg.socket_bw = num()?,
                    ("platform", "seed") => cfg.seed = int()?,
                    ("platform", "functional") => {
                        cfg.functional = value.trim().parse().map_err(|_| bad())?;
                    }
                    ("platform", "ddio_footprint") => {
                        let bw = cfg.ddio.as_ref().map_or(cfg.socket_bw, |d| d.degraded_bw);
                        cfg.ddio = Some(DdioConfig { footprint_bytes: int()?, degraded_bw: bw });
                    }
                    ("platform", "ddio_bw") => {
                        let fp = cfg.ddio.as_ref().map_or(u64::MAX, |d| d.footprint_bytes);
                        cfg.ddio = Some(DdioConfig { footprint_bytes: fp, degraded_bw: num()? });
                    }
                    ("fault", "stall_probability") => cfg.device.fault.stall_probability = num()?,
                    ("fault", "t_fault") => cfg.device.fault.t_fault = num()?,
                    ("timing", _) => set_timing(&mut cfg.device.timing, key, num()?).ok_or_else(bad)?,
                    ("tier", _) => {
                        let tier: Tier = index.unwrap_or("").parse()?;
                        let p = cfg.device.timing.tiers.get_mut(tier);
                        match key {
                            "read_bw" => p.read_bw = num()?,
                            "write_bw" => p.write_bw = num()?,
                            "extra_latency" => p.extra_latency = num()?,
                            _ => return Err(bad()),
                        }
                    }
                    ("group", _) => {
                        let i: usize = index.and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                        let g = entry(&mut groups, i, || GroupConfig {
                            wq_ids: BTreeSet::new(),
                            engine_ids: BTreeSet::new(),
                            read_buffers: 0,
                        });
                        match key {
                            "wqs" => g.wq_ids = list()?,
                            "engines" => g.engine_ids = list()?,
                            "read_buffers" => g.read_buffers = int()? as u32,
                            _ => return Err(bad()),
                        }
                    }
                    ("wq", _) => {
                        let i: usize = index.and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                        let w = entry(&mut wqs, i, || WorkQueueConfig {
                            mode: WqMode::Dedicated,
                            entries: 16,
                            priority: 1,
                            group_id: 0,
                        });
                        match key {
                            "mode" => w.mode = value.trim().parse()?,
                            "entries" => w.entries = int()? as u32,
                            "priority" => w.priority = int()?.min(255) as u8,
                            "group" => w.group_id = int()? as usize,
                            _ => return Err(bad()),
                        }
                    }
                    _ => return Err(bad()),
                }
            }
        }

        if !groups.is_empty() || !wqs.is_empty() {
            cfg.device.groups = dense(groups, "group")?;
            cfg.device.wqs = dense(wqs, "wq")?;
        } else {
            // Keep the default topology consistent with an overridden engine count.
            let n = cfg.device.n_engines;
            for g in &mut cfg.device.groups {
                g.engine_ids = (0..n).collect();
                g.read_buffers = cfg.device.timing.rb_nominal * n as u32;
            }
            cfg.device.total_read_buffers = cfg.device.total_read_buffers.max(cfg.device.timing.rb_nominal * n as u32);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_timing(t: &mut TimingModel, key: &str, v: f64) -> Option<()> {
    let slot = match key {
        "t_submit_dwq" => &mut t.t_submit_dwq,
        "t_submit_swq_roundtrip" => &mut t.t_submit_swq_roundtrip,
        "t_desc_fetch" => &mut t.t_desc_fetch,
        "t_batch_fetch" => &mut t.t_batch_fetch,
        "t_translate" => &mut t.t_translate,
        "t_pe_fixed" => &mut t.t_pe_fixed,
        "b_pe_max" => &mut t.b_pe_max,
        "b_fabric" => &mut t.b_fabric,
        "t_core_fixed" => &mut t.t_core_fixed,
        "t_core_per_byte" => &mut t.t_core_per_byte,
        "t_alloc" => &mut t.t_alloc,
        "t_prepare" => &mut t.t_prepare,
        "rb_nominal" => {
            t.rb_nominal = v as u32;
            return Some(());
        }
        "pe_pipeline_depth" => {
            t.pe_pipeline_depth = v as u32;
            return Some(());
        }
        _ => return None,
    };
    *slot = v;
    Some(())
}

fn entry<T>(items: &mut Vec<(usize, T)>, index: usize, make: impl FnOnce() -> T) -> &mut T {
    let pos = match items.iter().position(|(i, _)| *i == index) {
        Some(p) => p,
        None => {
            items.push((index, make()));
            items.len() - 1
        }
    };
    &mut items[pos].1
}

fn dense<T>(mut items: Vec<(usize, T)>, what: &str) -> Result<Vec<T>, ConfigError> {
    items.sort_by_key(|(i, _)| *i);
    for (expect, (i, _)) in items.iter().enumerate() {
        if *i != expect {
            return Err(ConfigError::Parse(format!("{what} sections must be numbered 0..n, missing {what}.{expect}")));
        }
    }
    Ok(items.into_iter().map(|(_, t)| t).collect())
}

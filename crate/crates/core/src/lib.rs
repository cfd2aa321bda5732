//! Functional and timing emulation of a descriptor-driven data streaming
//! accelerator: descriptors, data operations, a discrete-event device model,
//! an offload client, a virtqueue case study and a benchmark harness.

pub mod client;
pub mod completion;
pub mod config;
pub mod descriptor;
pub mod engine;
pub mod harness;
pub mod memory;
pub mod ops;
pub mod tracker;
pub mod vring;

pub use completion::CompletionCell;
pub use config::{
    ConfigError, DeviceConfig, FaultModel, GroupConfig, PlatformConfig, Tier, TierParams, TimingModel,
    WorkQueueConfig, WqMode,
};
pub use descriptor::{
    validate, Address, BatchDescriptor, BufferId, CompletionRecord, DescriptorError, Flags, OpParams, Opcode,
    Status, Violation, WorkDescriptor,
};
pub use engine::{software_baseline, Device, DeviceError, EnqueueOutcome, Telemetry};
pub use client::{build_batch, ClientError, OffloadHandle, Portal, PreparedBatch, Submission, WaitMode};
pub use tracker::{OrderedTracker, Slot, TrackerError};
pub use vring::{forward_benchmark, Direction, ForwardConfig, ForwardMode, ForwardRow, PacketBurst, Virtqueue, VringError};
pub use harness::{
    run_guideline_preset, run_latency_breakdown, run_sweep, write_csv, Breakdown, HarnessError, PresetReport, SweepRow,
    SweepSpec, SyncMode,
};

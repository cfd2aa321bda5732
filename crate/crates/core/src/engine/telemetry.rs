//! Device counters.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WqTelemetry {
    pub accepted: u64,
    pub completed: u64,
    pub retries: u64,
    pub max_occupancy: u32,
    pub entries: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub instance: usize,
    /// Simulated time of the snapshot, ns.
    pub elapsed_ns: f64,
    pub descriptors_completed: u64,
    pub batches_completed: u64,
    pub invalid_descriptors: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub bytes_flushed: u64,
    pub retries: u64,
    pub faults_injected: u64,
    /// Client time spent blocked in wait (the optimized wait state).
    pub wait_state_ns: f64,
    /// Client time spent spinning on completion records.
    pub busy_poll_ns: f64,
    /// Data-stage occupancy per engine.
    pub engine_busy_ns: Vec<f64>,
    /// Highest aggregate streaming rate seen on this device, bytes/ns.
    pub peak_rate: f64,
    pub wqs: Vec<WqTelemetry>,
}

impl Telemetry {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }
}

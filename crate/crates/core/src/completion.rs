//! Completion-record cells: written once by the device, read by any number
//! of clients.

use std::sync::OnceLock;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};

use crate::descriptor::{CompletionRecord, Status};

#[derive(Debug, Default)]
pub struct CompletionCell {
    record: OnceLock<CompletionRecord>,
    lock: Mutex<()>,
    cv: Condvar,
}

impl CompletionCell {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the terminal record and wakes blocked waiters. Returns false if
    /// the cell already held a record, which is left untouched.
    pub fn publish(&self, record: CompletionRecord) -> bool {
        debug_assert!(record.status.is_terminal());
        if self.record.set(record).is_err() {
            return false;
        }
        let _g = self.lock.lock();
        self.cv.notify_all();
        true
    }

    pub fn get(&self) -> Option<&CompletionRecord> {
        self.record.get()
    }

    pub fn status(&self) -> Status {
        self.get().map_or(Status::None, |r| r.status)
    }

    pub fn is_done(&self) -> bool {
        self.record.get().is_some()
    }

    /// Parks the calling thread until the record is published or `timeout`
    /// passes. Returns whether the record is present.
    pub fn wait_timeout(&self, timeout: Duration) -> bool {
        let mut g = self.lock.lock();
        if self.is_done() {
            return true;
        }
        self.cv.wait_for(&mut g, timeout);
        self.is_done()
    }
}

//! Submission-order completion tracking (a reordering array).

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TrackerError {
    #[error("slot {0} was never issued or has already been drained")]
    UnknownSlot(u64),
    #[error("slot {0} completed twice")]
    AlreadyCompleted(u64),
}

/// Position of an item in submission order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot(pub u64);

#[derive(Debug)]
struct Entry<T> {
    item: T,
    completed: bool,
}

/// Items complete in any order but are released strictly in the order they
/// were submitted: `drain` hands back the longest completed prefix.
#[derive(Debug)]
pub struct OrderedTracker<T> {
    entries: VecDeque<Entry<T>>,
    head: u64,
}

impl<T> Default for OrderedTracker<T> {
    fn default() -> Self {
        OrderedTracker { entries: VecDeque::new(), head: 0 }
    }
}

impl<T> OrderedTracker<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn submit(&mut self, item: T) -> Slot {
        self.entries.push_back(Entry { item, completed: false });
        Slot(self.head + self.entries.len() as u64 - 1)
    }

    pub fn complete(&mut self, slot: Slot) -> Result<(), TrackerError> {
        let idx = slot.0.checked_sub(self.head).ok_or(TrackerError::UnknownSlot(slot.0))?;
        let e = self.entries.get_mut(idx as usize).ok_or(TrackerError::UnknownSlot(slot.0))?;
        if e.completed {
            return Err(TrackerError::AlreadyCompleted(slot.0));
        }
        e.completed = true;
        Ok(())
    }

    pub fn is_completed(&self, slot: Slot) -> bool {
        match slot.0.checked_sub(self.head) {
            Some(i) => self.entries.get(i as usize).is_some_and(|e| e.completed),
            None => true,
        }
    }

    /// Removes and returns the completed prefix, advancing the head.
    pub fn drain(&mut self) -> Vec<T> {
        let n = self.entries.iter().take_while(|e| e.completed).count();
        self.head += n as u64;
        self.entries.drain(..n).map(|e| e.item).collect()
    }

    /// Slot of the oldest undrained item.
    pub fn head(&self) -> Slot {
        Slot(self.head)
    }

    /// Items submitted but not yet drained.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Undrained items with their slots, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (Slot, &T, bool)> {
        self.entries.iter().enumerate().map(move |(i, e)| (Slot(self.head + i as u64), &e.item, e.completed))
    }
}

//! Priority-weighted round robin over the work queues of one group.

/// Grants the current queue up to `priority` consecutive dispatches, then
/// moves on. A queue that stays eligible is granted within one full cycle,
/// i.e. after at most the sum of all priorities dispatches.
#[derive(Clone, Debug)]
pub struct Arbiter {
    weights: Vec<u32>,
    cursor: usize,
    credits: u32,
}

impl Arbiter {
    pub fn new(weights: Vec<u32>) -> Self {
        assert!(weights.iter().all(|&w| w >= 1), "weights must be positive");
        let credits = weights.first().copied().unwrap_or(0);
        Arbiter { weights, cursor: 0, credits }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Picks the next queue among those for which `eligible` holds. When
    /// none is eligible the rotation state is left untouched.
    pub fn next(&mut self, eligible: impl Fn(usize) -> bool) -> Option<usize> {
        let n = self.weights.len();
        if !(0..n).any(&eligible) {
            return None;
        }
        for _ in 0..=n {
            if self.credits > 0 && eligible(self.cursor) {
                self.credits -= 1;
                return Some(self.cursor);
            }
            self.cursor = (self.cursor + 1) % n.max(1);
            self.credits = self.weights.get(self.cursor).copied().unwrap_or(0);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_ratio_exact_when_saturated() {
        let mut a = Arbiter::new(vec![3, 1]);
        let mut counts = [0usize; 2];
        for _ in 0..4000 {
            counts[a.next(|_| true).unwrap()] += 1;
        }
        assert_eq!(counts, [3000, 1000]);
    }

    #[test]
    fn idle_polls_keep_the_ratio() {
        let mut a = Arbiter::new(vec![3, 1]);
        let mut counts = [0usize; 2];
        for _ in 0..4000 {
            counts[a.next(|_| true).unwrap()] += 1;
            assert_eq!(a.next(|_| false), None);
            assert_eq!(a.next(|_| false), None);
        }
        assert_eq!(counts, [3000, 1000]);
    }

    #[test]
    fn skips_ineligible() {
        let mut a = Arbiter::new(vec![2, 2, 2]);
        for _ in 0..10 {
            assert_eq!(a.next(|i| i == 1), Some(1));
        }
        assert_eq!(a.next(|_| false), None);
    }

    #[test]
    fn low_priority_not_starved() {
        let mut a = Arbiter::new(vec![1, 15]);
        let mut since = 0;
        for _ in 0..10_000 {
            if a.next(|_| true) == Some(0) {
                since = 0;
            } else {
                since += 1;
                assert!(since < 16);
            }
        }
    }
}

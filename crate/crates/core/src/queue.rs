//! FIFO queue of active agent states.

use std::collections::VecDeque;

/// Queue entries carry strictly increasing tags; dequeue removes the
/// lowest tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveQueue {
    entries: VecDeque<(u64, Vec<f64>)>,
    next_tag: u64,
}

fn same_state(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl ActiveQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_states<I: IntoIterator<Item = Vec<f64>>>(states: I) -> Self {
        let mut q = Self::new();
        for s in states {
            q.enqueue(s);
        }
        q
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `state` and returns its tag.
    pub fn enqueue(&mut self, state: Vec<f64>) -> u64 {
        let tag = self.next_tag;
        self.next_tag += 1;
        self.entries.push_back((tag, state));
        tag
    }

    pub fn dequeue(&mut self) -> Option<(u64, Vec<f64>)> {
        self.entries.pop_front()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = (u64, &[f64])> {
        self.entries.iter().map(|(t, s)| (*t, s.as_slice()))
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.entries.iter().map(|(_, s)| s.as_slice())
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        self.states().any(|s| same_state(s, state))
    }

    /// Dequeues down to `target` entries. If `keep` was among the removed
    /// states and no copy survives, it is re-enqueued and one more entry is
    /// dequeued so the length is still `target`. Returns the removed entries
    /// in dequeue order.
    pub fn trim(&mut self, target: usize, keep: &[f64]) -> Vec<(u64, Vec<f64>)> {
        let mut removed = Vec::new();
        while self.entries.len() > target {
            removed.push(self.dequeue().expect("length checked"));
        }
        let lost = removed.iter().any(|(_, s)| same_state(s, keep));
        if lost && target > 0 && !self.contains(keep) {
            self.enqueue(keep.to_vec());
            removed.push(self.dequeue().expect("queue is non-empty"));
        }
        removed
    }
}

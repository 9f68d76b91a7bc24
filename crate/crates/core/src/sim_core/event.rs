use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::time::{Micros, SimTime};

struct Scheduled<A> {
    time: SimTime,
    seq: u64,
    action: A,
}

impl<A> PartialEq for Scheduled<A> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<A> Eq for Scheduled<A> {}

impl<A> PartialOrd for Scheduled<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Scheduled<A> {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Discrete-event queue executing actions in `(time, insertion order)`.
pub struct EventQueue<A> {
    heap: BinaryHeap<Scheduled<A>>,
    now: SimTime,
    next_seq: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), now: SimTime::ZERO, next_seq: 0 }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `action` at `time`. Panics if `time` is in the past.
    pub fn schedule_at(&mut self, time: SimTime, action: A) {
        assert!(time >= self.now, "scheduling at {time:?} before now {:?}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time, seq, action });
    }

    pub fn schedule_in(&mut self, delay: Micros, action: A) {
        self.schedule_at(self.now + delay, action);
    }

    /// Removes the next action and advances the clock to its time.
    pub fn pop(&mut self) -> Option<(SimTime, A)> {
        let s = self.heap.pop()?;
        debug_assert!(s.time >= self.now);
        self.now = s.time;
        Some((s.time, s.action))
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|s| s.time)
    }

    /// Pops every action in order, letting `handle` schedule more.
    pub fn run_until_idle(&mut self, mut handle: impl FnMut(&mut Self, SimTime, A)) {
        while let Some((t, a)) = self.pop() {
            handle(self, t, a);
        }
    }
}

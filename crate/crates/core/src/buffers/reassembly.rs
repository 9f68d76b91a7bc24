use std::ops::Range;

use crate::sim_core::{Micros, SimTime};

use super::arena::PacketArena;
use super::key::DatagramKey;

/// Default reassembly timeout in microseconds (10 s).
pub const DEFAULT_REASSEMBLY_TIMEOUT_US: Micros = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbufDrop {
    /// No free entry for a new datagram.
    Full,
    /// Packet buffer could not hold the fragment data.
    PktbufFull,
    /// Fragment reaches past the advertised datagram size.
    OutOfBounds,
}

#[derive(Debug)]
pub enum InsertOutcome<M> {
    Accepted,
    Completed(Reassembled<M>),
    Dropped(RbufDrop),
}

#[derive(Debug)]
pub struct Reassembled<M> {
    pub key: DatagramKey,
    pub data: Vec<u8>,
    pub created_at: SimTime,
    pub meta: M,
}

#[derive(Debug)]
pub struct Expired<M> {
    pub key: DatagramKey,
    pub first_fragment_seen: bool,
    pub received_bytes: usize,
    pub meta: M,
}

#[derive(Debug)]
pub struct ReassemblyEntry<M> {
    pub key: DatagramKey,
    /// Sorted, disjoint, non-adjacent.
    intervals: Vec<Range<usize>>,
    data: Vec<u8>,
    charged: usize,
    pub created_at: SimTime,
    pub deadline: SimTime,
    pub meta: M,
}

impl<M> ReassemblyEntry<M> {
    pub fn received_bytes(&self) -> usize {
        self.charged
    }

    pub fn first_fragment_seen(&self) -> bool {
        self.intervals.first().is_some_and(|r| r.start == 0)
    }

    pub fn intervals(&self) -> &[Range<usize>] {
        &self.intervals
    }

    fn is_complete(&self) -> bool {
        self.intervals.len() == 1 && self.intervals[0] == (0..self.data.len())
    }

    /// Writes the parts of `range` not yet covered; returns bytes newly stored.
    fn fill(&mut self, range: Range<usize>, bytes: &[u8]) -> usize {
        let mut fresh = Vec::new();
        let mut cursor = range.start;
        for iv in &self.intervals {
            if iv.end <= cursor || iv.start >= range.end {
                continue;
            }
            if iv.start > cursor {
                fresh.push(cursor..iv.start);
            }
            cursor = cursor.max(iv.end);
        }
        if cursor < range.end {
            fresh.push(cursor..range.end);
        }
        let mut added = 0;
        for r in fresh {
            self.data[r.clone()].copy_from_slice(&bytes[r.start - range.start..r.end - range.start]);
            added += r.len();
            self.intervals.push(r);
        }
        self.intervals.sort_by_key(|r| r.start);
        let mut merged: Vec<Range<usize>> = Vec::with_capacity(self.intervals.len());
        for r in self.intervals.drain(..) {
            match merged.last_mut() {
                Some(last) if last.end >= r.start => last.end = last.end.max(r.end),
                _ => merged.push(r),
            }
        }
        self.intervals = merged;
        added
    }

    fn missing_bytes(&self, range: &Range<usize>) -> usize {
        let covered: usize = self
            .intervals
            .iter()
            .map(|iv| iv.end.min(range.end).saturating_sub(iv.start.max(range.start)))
            .sum();
        range.len() - covered
    }
}

/// Per-node reassembly buffer with a fixed number of entries.
///
/// Datagram bytes are charged to the node's packet arena as they arrive.
/// Entries past their deadline are only removed by [`ReassemblyBuffer::gc`];
/// callers run it before inserting. An entry is expired when `now > deadline`.
#[derive(Debug)]
pub struct ReassemblyBuffer<M> {
    capacity: usize,
    timeout: Micros,
    entries: Vec<ReassemblyEntry<M>>,
    /// Entries held on behalf of datagrams buffered elsewhere on the node.
    reserved: usize,
    duplicate_bytes: u64,
}

impl<M> ReassemblyBuffer<M> {
    pub fn new(capacity: usize, timeout: Micros) -> Self {
        Self { capacity, timeout, entries: Vec::new(), reserved: 0, duplicate_bytes: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() + self.reserved >= self.capacity
    }

    /// Takes one entry out of service without storing anything in it.
    /// Fails when the buffer is full.
    pub fn reserve(&mut self) -> bool {
        if self.is_full() {
            return false;
        }
        self.reserved += 1;
        true
    }

    pub fn unreserve(&mut self) {
        assert!(self.reserved > 0, "unreserve without reservation");
        self.reserved -= 1;
    }

    pub fn reserved(&self) -> usize {
        self.reserved
    }

    pub fn duplicate_bytes(&self) -> u64 {
        self.duplicate_bytes
    }

    pub fn get(&self, key: &DatagramKey) -> Option<&ReassemblyEntry<M>> {
        self.entries.iter().find(|e| e.key == *key)
    }

    pub fn get_mut(&mut self, key: &DatagramKey) -> Option<&mut ReassemblyEntry<M>> {
        self.entries.iter_mut().find(|e| e.key == *key)
    }

    pub fn contains(&self, key: &DatagramKey) -> bool {
        self.get(key).is_some()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReassemblyEntry<M>> {
        self.entries.iter()
    }

    /// Adds `bytes` at uncompressed `offset` of the datagram identified by
    /// `key`. `meta` is only evaluated when a new entry is created.
    pub fn insert(
        &mut self,
        key: DatagramKey,
        offset: usize,
        bytes: &[u8],
        now: SimTime,
        arena: &mut PacketArena,
        meta: impl FnOnce() -> M,
    ) -> InsertOutcome<M> {
        let size = key.datagram_size as usize;
        let range = offset..offset + bytes.len();
        if range.end > size {
            return InsertOutcome::Dropped(RbufDrop::OutOfBounds);
        }
        let idx = match self.entries.iter().position(|e| e.key == key) {
            Some(i) => i,
            None => {
                if self.is_full() {
                    return InsertOutcome::Dropped(RbufDrop::Full);
                }
                self.entries.push(ReassemblyEntry {
                    key,
                    intervals: Vec::new(),
                    data: vec![0; size],
                    charged: 0,
                    created_at: now,
                    deadline: now + self.timeout,
                    meta: meta(),
                });
                self.entries.len() - 1
            }
        };
        let entry = &mut self.entries[idx];
        let missing = entry.missing_bytes(&range);
        if arena.alloc(missing).is_err() {
            if entry.charged == 0 && entry.intervals.is_empty() {
                self.entries.remove(idx);
            }
            return InsertOutcome::Dropped(RbufDrop::PktbufFull);
        }
        let added = entry.fill(range.clone(), bytes);
        debug_assert_eq!(added, missing);
        entry.charged += added;
        self.duplicate_bytes += (range.len() - added) as u64;
        if entry.is_complete() {
            let e = self.entries.remove(idx);
            arena.release(e.charged);
            return InsertOutcome::Completed(Reassembled { key: e.key, data: e.data, created_at: e.created_at, meta: e.meta });
        }
        InsertOutcome::Accepted
    }

    /// Removes entries whose deadline has passed and frees their bytes.
    pub fn gc(&mut self, now: SimTime, arena: &mut PacketArena) -> Vec<Expired<M>> {
        let mut expired = Vec::new();
        let mut i = 0;
        while i < self.entries.len() {
            if now > self.entries[i].deadline {
                let e = self.entries.remove(i);
                arena.release(e.charged);
                expired.push(Expired {
                    key: e.key,
                    first_fragment_seen: e.first_fragment_seen(),
                    received_bytes: e.charged,
                    meta: e.meta,
                });
            } else {
                i += 1;
            }
        }
        expired
    }

    /// Drops every entry regardless of deadline.
    pub fn clear(&mut self, arena: &mut PacketArena) -> Vec<Expired<M>> {
        self.gc(SimTime::MAX, arena)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::L2Addr;

    #[test]
    fn reservations_count_against_capacity() {
        let mut arena = PacketArena::unbounded();
        let mut rb: ReassemblyBuffer<()> = ReassemblyBuffer::new(1, 10);
        assert!(rb.reserve());
        assert!(!rb.reserve());
        let r = rb.insert(key(80, 1), 0, &[0; 8], SimTime(0), &mut arena, || ());
        assert!(matches!(r, InsertOutcome::Dropped(RbufDrop::Full)));
        rb.unreserve();
        let r = rb.insert(key(80, 1), 0, &[0; 8], SimTime(0), &mut arena, || ());
        assert!(matches!(r, InsertOutcome::Accepted));
    }

    fn key(size: u16, tag: u16) -> DatagramKey {
        DatagramKey { l2_src: L2Addr::for_node(1), l2_dst: L2Addr::for_node(2), datagram_size: size, datagram_tag: tag }
    }

    #[test]
    fn two_fragments_complete() {
        let mut a = PacketArena::new(6144);
        let mut rb = ReassemblyBuffer::new(1, DEFAULT_REASSEMBLY_TIMEOUT_US);
        let data: Vec<u8> = (0..80).collect();
        assert!(matches!(rb.insert(key(80, 1), 48, &data[48..], SimTime::ZERO, &mut a, || ()), InsertOutcome::Accepted));
        assert_eq!(a.used(), 32);
        match rb.insert(key(80, 1), 0, &data[..48], SimTime::ZERO, &mut a, || ()) {
            InsertOutcome::Completed(r) => assert_eq!(r.data, data),
            other => panic!("{other:?}"),
        }
        assert!(rb.is_empty());
        assert_eq!(a.used(), 0);
    }

    #[test]
    fn new_key_when_full_is_dropped() {
        let mut a = PacketArena::new(6144);
        let mut rb = ReassemblyBuffer::new(1, DEFAULT_REASSEMBLY_TIMEOUT_US);
        rb.insert(key(200, 1), 0, &[0; 48], SimTime::ZERO, &mut a, || ());
        assert!(matches!(
            rb.insert(key(200, 2), 0, &[0; 48], SimTime::ZERO, &mut a, || ()),
            InsertOutcome::Dropped(RbufDrop::Full)
        ));
        // same key still accepted
        assert!(matches!(rb.insert(key(200, 1), 48, &[0; 8], SimTime::ZERO, &mut a, || ()), InsertOutcome::Accepted));
    }

    #[test]
    fn overlap_keeps_first_writer() {
        let mut a = PacketArena::new(6144);
        let mut rb = ReassemblyBuffer::new(2, DEFAULT_REASSEMBLY_TIMEOUT_US);
        rb.insert(key(24, 1), 0, &[1; 16], SimTime::ZERO, &mut a, || ());
        match rb.insert(key(24, 1), 8, &[2; 16], SimTime::ZERO, &mut a, || ()) {
            InsertOutcome::Completed(r) => {
                assert_eq!(&r.data[..16], &[1; 16]);
                assert_eq!(&r.data[16..], &[2; 8]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(rb.duplicate_bytes(), 8);
        assert_eq!(a.used(), 0);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let mut a = PacketArena::new(6144);
        let mut rb: ReassemblyBuffer<()> = ReassemblyBuffer::new(2, 10);
        assert!(matches!(
            rb.insert(key(16, 1), 8, &[0; 16], SimTime::ZERO, &mut a, || ()),
            InsertOutcome::Dropped(RbufDrop::OutOfBounds)
        ));
        assert!(rb.is_empty());
    }

    #[test]
    fn arena_exhaustion_drops_fragment() {
        let mut a = PacketArena::new(40);
        let mut rb = ReassemblyBuffer::new(2, 10);
        assert!(matches!(
            rb.insert(key(96, 1), 0, &[0; 48], SimTime::ZERO, &mut a, || ()),
            InsertOutcome::Dropped(RbufDrop::PktbufFull)
        ));
        assert!(rb.is_empty());
        assert_eq!(a.used(), 0);
    }

    #[test]
    fn gc_empty_is_noop() {
        let mut a = PacketArena::new(10);
        let mut rb: ReassemblyBuffer<()> = ReassemblyBuffer::new(1, 10);
        assert!(rb.gc(SimTime::from_secs(100), &mut a).is_empty());
    }

    #[test]
    fn gc_expires_after_timeout_with_first_fragment_flag() {
        let mut a = PacketArena::new(6144);
        let mut rb = ReassemblyBuffer::new(4, DEFAULT_REASSEMBLY_TIMEOUT_US);
        let t = SimTime::from_secs(3);
        // 3-fragment transfer with FRAG1 lost: only offsets 48 and 144 arrive
        rb.insert(key(200, 1), 48, &[0; 96], t, &mut a, || "a");
        rb.insert(key(200, 1), 144, &[0; 56], t, &mut a, || "a");
        // complete-but-one with FRAG1 present
        rb.insert(key(200, 2), 0, &[0; 48], t, &mut a, || "b");

        let deadline = t + DEFAULT_REASSEMBLY_TIMEOUT_US;
        assert!(rb.gc(deadline, &mut a).is_empty(), "entry at exactly its deadline is kept");
        let mut expired = rb.gc(deadline + 1, &mut a);
        expired.sort_by_key(|e| e.meta);
        assert_eq!(expired.len(), 2);
        assert!(!expired[0].first_fragment_seen);
        assert_eq!(expired[0].received_bytes, 152);
        assert!(expired[1].first_fragment_seen);
        assert_eq!(a.used(), 0);
    }

    #[test]
    fn completion_at_deadline_wins() {
        let mut a = PacketArena::new(6144);
        let mut rb = ReassemblyBuffer::new(1, 1000);
        rb.insert(key(16, 1), 0, &[0; 8], SimTime::ZERO, &mut a, || ());
        let at = SimTime::ZERO + 1000;
        assert!(rb.gc(at, &mut a).is_empty());
        assert!(matches!(rb.insert(key(16, 1), 8, &[0; 8], at, &mut a, || ()), InsertOutcome::Completed(_)));
    }
}

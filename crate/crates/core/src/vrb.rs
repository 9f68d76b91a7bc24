//! Virtual reassembly buffer: maps the identity of an incoming fragmented
//! datagram to the next hop and outgoing tag chosen when its first fragment
//! was forwarded, so later fragments can follow without the IPv6 header.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::buffers::{DatagramKey, L2Addr};
use crate::sim_core::{Micros, SimTime};

pub const DEFAULT_VRB_ENTRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VrbError {
    #[error("virtual reassembly buffer is full")]
    TableFull,
    #[error("an entry for this datagram already exists")]
    DuplicateKey,
}

/// Per-neighbor 16-bit datagram tag sequences for one node.
#[derive(Debug, Clone, Default)]
pub struct TagAllocator {
    next: BTreeMap<L2Addr, u16>,
}

impl TagAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next tag toward `neighbor`, skipping values for which `in_use` holds.
    ///
    /// Panics if all 65536 tags are in use.
    pub fn allocate(&mut self, neighbor: L2Addr, in_use: impl Fn(u16) -> bool) -> u16 {
        let counter = self.next.entry(neighbor).or_insert(0);
        for _ in 0..=u16::MAX as u32 {
            let tag = *counter;
            *counter = counter.wrapping_add(1);
            if !in_use(tag) {
                return tag;
            }
        }
        panic!("no free datagram tag toward {neighbor:?}");
    }
}

#[derive(Debug)]
pub struct VrbEntry<Q> {
    pub key: DatagramKey,
    pub next_hop: L2Addr,
    pub out_tag: u16,
    pub created_at: SimTime,
    pub deadline: SimTime,
    /// Fragments held back until the whole datagram has passed (queued variant).
    pub queued: Vec<Q>,
    /// Uncompressed datagram bytes that have passed through this entry.
    pub forwarded_bytes: usize,
}

impl<Q> VrbEntry<Q> {
    pub fn all_bytes_passed(&self) -> bool {
        self.forwarded_bytes >= self.key.datagram_size as usize
    }
}

#[derive(Debug)]
pub struct VrbTable<Q> {
    capacity: usize,
    lifetime: Micros,
    entries: Vec<VrbEntry<Q>>,
}

impl<Q> VrbTable<Q> {
    pub fn new(capacity: usize, lifetime: Micros) -> Self {
        Self { capacity, lifetime, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Records forwarding state for a datagram whose first fragment arrived.
    ///
    /// The outgoing tag comes from `tags`, skipping tags that are live in this
    /// table or for which `reserved` holds (local fragmentations).
    pub fn create(
        &mut self,
        key: DatagramKey,
        next_hop: L2Addr,
        now: SimTime,
        tags: &mut TagAllocator,
        reserved: impl Fn(L2Addr, u16) -> bool,
    ) -> Result<&mut VrbEntry<Q>, VrbError> {
        if self.entries.iter().any(|e| e.key == key) {
            return Err(VrbError::DuplicateKey);
        }
        if self.entries.len() >= self.capacity {
            return Err(VrbError::TableFull);
        }
        let out_tag = tags.allocate(next_hop, |t| self.uses_tag(next_hop, t) || reserved(next_hop, t));
        self.entries.push(VrbEntry {
            key,
            next_hop,
            out_tag,
            created_at: now,
            deadline: now + self.lifetime,
            queued: Vec::new(),
            forwarded_bytes: 0,
        });
        Ok(self.entries.last_mut().expect("just pushed"))
    }

    /// `(next_hop, out_tag)` for a live entry; expired entries miss even
    /// before [`VrbTable::expire`] removes them.
    pub fn lookup(&self, key: &DatagramKey, now: SimTime) -> Option<(L2Addr, u16)> {
        self.entries
            .iter()
            .find(|e| e.key == *key && now <= e.deadline)
            .map(|e| (e.next_hop, e.out_tag))
    }

    pub fn get_mut(&mut self, key: &DatagramKey) -> Option<&mut VrbEntry<Q>> {
        self.entries.iter_mut().find(|e| e.key == *key)
    }

    pub fn remove(&mut self, key: &DatagramKey) -> Option<VrbEntry<Q>> {
        let i = self.entries.iter().position(|e| e.key == *key)?;
        Some(self.entries.remove(i))
    }

    pub fn uses_tag(&self, next_hop: L2Addr, tag: u16) -> bool {
        self.entries.iter().any(|e| e.next_hop == next_hop && e.out_tag == tag)
    }

    /// Removes entries with `now > deadline`, returning them with any
    /// fragments still queued.
    pub fn expire(&mut self, now: SimTime) -> Vec<VrbEntry<Q>> {
        let (gone, keep): (Vec<_>, Vec<_>) = self.entries.drain(..).partition(|e| now > e.deadline);
        self.entries = keep;
        gone
    }

    pub fn entries(&self) -> impl Iterator<Item = &VrbEntry<Q>> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::DEFAULT_REASSEMBLY_TIMEOUT_US;

    fn key(tag: u16) -> DatagramKey {
        DatagramKey { l2_src: L2Addr::for_node(1), l2_dst: L2Addr::for_node(2), datagram_size: 300, datagram_tag: tag }
    }

    fn table() -> VrbTable<()> {
        VrbTable::new(DEFAULT_VRB_ENTRIES, DEFAULT_REASSEMBLY_TIMEOUT_US)
    }

    #[test]
    fn create_then_lookup() {
        let mut vrb = table();
        let mut tags = TagAllocator::new();
        let h2 = L2Addr::for_node(3);
        let tag = vrb.create(key(1), h2, SimTime::ZERO, &mut tags, |_, _| false).unwrap().out_tag;
        assert_eq!(vrb.lookup(&key(1), SimTime::from_secs(1)), Some((h2, tag)));
        assert_eq!(vrb.lookup(&key(2), SimTime::ZERO), None);
    }

    #[test]
    fn duplicate_create_is_rejected() {
        let mut vrb = table();
        let mut tags = TagAllocator::new();
        vrb.create(key(1), L2Addr::for_node(3), SimTime::ZERO, &mut tags, |_, _| false).unwrap();
        let err = vrb.create(key(1), L2Addr::for_node(3), SimTime::ZERO, &mut tags, |_, _| false).unwrap_err();
        assert_eq!(err, VrbError::DuplicateKey);
    }

    #[test]
    fn seventeenth_entry_is_refused() {
        let mut vrb = table();
        let mut tags = TagAllocator::new();
        for t in 0..16 {
            vrb.create(key(t), L2Addr::for_node(3), SimTime::ZERO, &mut tags, |_, _| false).unwrap();
        }
        let err = vrb.create(key(16), L2Addr::for_node(3), SimTime::ZERO, &mut tags, |_, _| false).unwrap_err();
        assert_eq!(err, VrbError::TableFull);
    }

    #[test]
    fn lookup_misses_after_deadline() {
        let mut vrb = table();
        let mut tags = TagAllocator::new();
        vrb.create(key(1), L2Addr::for_node(3), SimTime::ZERO, &mut tags, |_, _| false).unwrap();
        let deadline = SimTime::ZERO + DEFAULT_REASSEMBLY_TIMEOUT_US;
        assert!(vrb.lookup(&key(1), deadline).is_some());
        assert!(vrb.lookup(&key(1), deadline + 1).is_none());
    }

    #[test]
    fn expire_boundaries() {
        let mut vrb = table();
        assert!(vrb.expire(SimTime::from_secs(50)).is_empty());
        let mut tags = TagAllocator::new();
        vrb.create(key(1), L2Addr::for_node(3), SimTime::ZERO, &mut tags, |_, _| false).unwrap();
        let deadline = SimTime::ZERO + DEFAULT_REASSEMBLY_TIMEOUT_US;
        assert!(vrb.expire(deadline).is_empty());
        assert_eq!(vrb.len(), 1);
        let gone = vrb.expire(deadline + 1);
        assert_eq!(gone.len(), 1);
        assert!(vrb.is_empty());
    }

    #[test]
    fn tags_unique_per_neighbor_and_skip_reserved() {
        let mut vrb = table();
        let mut tags = TagAllocator::new();
        let n = L2Addr::for_node(3);
        // tag 0 is held by a local fragmentation toward n
        let t1 = vrb.create(key(1), n, SimTime::ZERO, &mut tags, |h, t| h == n && t == 0).unwrap().out_tag;
        let t2 = vrb.create(key(2), n, SimTime::ZERO, &mut tags, |_, _| false).unwrap().out_tag;
        assert_eq!((t1, t2), (1, 2));
        let other = vrb.create(key(3), L2Addr::for_node(4), SimTime::ZERO, &mut tags, |_, _| false).unwrap().out_tag;
        assert_eq!(other, 0);
    }

    #[test]
    fn allocator_wraps_and_skips_live() {
        let mut tags = TagAllocator::new();
        let n = L2Addr::for_node(1);
        for _ in 0..=u16::MAX as u32 {
            tags.allocate(n, |_| false);
        }
        assert_eq!(tags.allocate(n, |t| t < 5), 5);
    }
}

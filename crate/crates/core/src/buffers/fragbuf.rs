use std::collections::VecDeque;

use crate::frag_codec::Fragment;

use super::key::L2Addr;

/// Default number of fragmentation buffer slots.
pub const DEFAULT_FRAG_BUFFER_SLOTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotId(pub usize);

/// A datagram being fragmented asynchronously: fragments are handed to the
/// MAC one at a time as the previous one finishes.
#[derive(Debug)]
pub struct FragSlot<M> {
    pub next_hop: L2Addr,
    pub datagram_size: u16,
    pub out_tag: u16,
    /// Uncompressed offset of the next fragment to hand out.
    pub next_offset: usize,
    pub pending: VecDeque<Fragment>,
    /// Bytes of the datagram held in the packet arena.
    pub charged: usize,
    pub meta: M,
}

impl<M> FragSlot<M> {
    pub fn pop_fragment(&mut self) -> Option<Fragment> {
        let f = self.pending.pop_front()?;
        self.next_offset = f.covered().end;
        Some(f)
    }
}

#[derive(Debug)]
pub struct FragmentationBuffer<M> {
    slots: Vec<Option<FragSlot<M>>>,
}

impl<M> FragmentationBuffer<M> {
    pub fn new(capacity: usize) -> Self {
        Self { slots: (0..capacity).map(|_| None).collect() }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn in_use(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Stores `slot`, handing it back when every slot is occupied.
    pub fn reserve(&mut self, slot: FragSlot<M>) -> Result<SlotId, FragSlot<M>> {
        match self.slots.iter().position(Option::is_none) {
            Some(i) => {
                self.slots[i] = Some(slot);
                Ok(SlotId(i))
            }
            None => Err(slot),
        }
    }

    pub fn get_mut(&mut self, id: SlotId) -> Option<&mut FragSlot<M>> {
        self.slots.get_mut(id.0)?.as_mut()
    }

    pub fn release(&mut self, id: SlotId) -> Option<FragSlot<M>> {
        self.slots.get_mut(id.0)?.take()
    }

    /// Whether a live local fragmentation already uses `tag` toward `next_hop`.
    pub fn uses_tag(&self, next_hop: L2Addr, tag: u16) -> bool {
        self.slots.iter().flatten().any(|s| s.next_hop == next_hop && s.out_tag == tag)
    }
}

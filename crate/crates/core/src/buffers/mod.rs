//! Reassembly buffer, shared packet arena, fragmentation buffer and the two
//! memory-accounting models for reassembly state.

mod arena;
mod fragbuf;
mod key;
mod reassembly;

use serde::{Deserialize, Serialize};

pub use arena::{ArenaFull, PacketArena, DEFAULT_ARENA_CAPACITY};
pub use fragbuf::{FragSlot, FragmentationBuffer, SlotId, DEFAULT_FRAG_BUFFER_SLOTS};
pub use key::{DatagramKey, L2Addr};
pub use reassembly::{
    Expired, InsertOutcome, Reassembled, ReassemblyBuffer, ReassemblyEntry, RbufDrop,
    DEFAULT_REASSEMBLY_TIMEOUT_US,
};

/// Bytes needed to store one link-layer address plus its length byte.
pub const ADDR_FIELD_BYTES: usize = 8 + 1;
/// IPv6 minimum MTU, the largest datagram a naive entry must hold.
pub const IPV6_MIN_MTU: usize = 1280;
/// Statically allocated entry: both addresses, size, tag and a full datagram.
pub const NAIVE_ENTRY_BYTES: usize = 2 * ADDR_FIELD_BYTES + 2 + 2 + IPV6_MIN_MTU;
/// Entry metadata when datagram bytes live in the shared packet buffer.
pub const ARENA_ENTRY_BYTES: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    /// Every entry reserves room for a full datagram.
    Naive,
    /// Small entry plus on-demand bytes in the packet arena.
    Arena,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryModel {
    pub mode: MemoryMode,
    pub arena_capacity: usize,
}

impl MemoryModel {
    pub fn naive() -> Self {
        Self { mode: MemoryMode::Naive, arena_capacity: 0 }
    }

    pub fn arena(capacity: usize) -> Self {
        Self { mode: MemoryMode::Arena, arena_capacity: capacity }
    }

    pub fn per_entry_static(&self) -> usize {
        match self.mode {
            MemoryMode::Naive => NAIVE_ENTRY_BYTES,
            MemoryMode::Arena => ARENA_ENTRY_BYTES,
        }
    }

    /// Reassembly memory for `entries` live entries with `arena_bytes`
    /// currently charged to the packet arena.
    pub fn usage(&self, entries: usize, arena_bytes: usize) -> usize {
        match self.mode {
            MemoryMode::Naive => entries * NAIVE_ENTRY_BYTES,
            MemoryMode::Arena => entries * ARENA_ENTRY_BYTES + arena_bytes,
        }
    }
}

/// Tracks the peak of [`MemoryModel::usage`] over a run.
#[derive(Debug, Clone, Copy)]
pub struct MemoryMeter {
    model: MemoryModel,
    high_water: usize,
}

impl MemoryMeter {
    pub fn new(model: MemoryModel) -> Self {
        Self { model, high_water: 0 }
    }

    pub fn sample(&mut self, entries: usize, arena_bytes: usize) -> usize {
        let u = self.model.usage(entries, arena_bytes);
        self.high_water = self.high_water.max(u);
        u
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_entry_itemization() {
        assert_eq!(NAIVE_ENTRY_BYTES, 1302);
        assert_eq!(MemoryModel::naive().usage(16, 0), 16 * 1302);
        assert_eq!(MemoryModel::naive().usage(16, 0), 20832);
        assert_eq!(MemoryModel::naive().usage(0, 0), 0);
    }

    #[test]
    fn arena_entry_cost() {
        let m = MemoryModel::arena(DEFAULT_ARENA_CAPACITY);
        assert_eq!(m.per_entry_static(), 22);
        assert_eq!(m.usage(1, 1280), 22 + 1280);
        assert_eq!(m.usage(0, 0), 0);
    }

    #[test]
    fn meter_tracks_peak() {
        let mut m = MemoryMeter::new(MemoryModel::arena(6144));
        m.sample(1, 100);
        m.sample(2, 900);
        m.sample(0, 0);
        assert_eq!(m.high_water(), 2 * 22 + 900);
    }
}

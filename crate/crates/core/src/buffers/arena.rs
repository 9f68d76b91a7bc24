use thiserror::Error;

/// Default shared packet buffer size in bytes.
pub const DEFAULT_ARENA_CAPACITY: usize = 6144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("packet buffer full: {requested} bytes requested, {free} free")]
pub struct ArenaFull {
    pub requested: usize,
    pub free: usize,
}

/// Byte-accounting model of a node's shared packet buffer.
///
/// Only sizes are tracked; contents live with their owners. Every `alloc`
/// must be paired with a `release` of the same size.
#[derive(Debug, Clone)]
pub struct PacketArena {
    capacity: usize,
    used: usize,
    high_water: usize,
    allocs: u64,
    releases: u64,
}

impl PacketArena {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, used: 0, high_water: 0, allocs: 0, releases: 0 }
    }

    pub fn unbounded() -> Self {
        Self::new(usize::MAX)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn free(&self) -> usize {
        self.capacity - self.used
    }

    pub fn alloc(&mut self, bytes: usize) -> Result<(), ArenaFull> {
        if bytes > self.free() {
            return Err(ArenaFull { requested: bytes, free: self.free() });
        }
        self.used += bytes;
        self.high_water = self.high_water.max(self.used);
        self.allocs += 1;
        Ok(())
    }

    pub fn release(&mut self, bytes: usize) {
        assert!(bytes <= self.used, "releasing {bytes} bytes with only {} in use", self.used);
        self.used -= bytes;
        self.releases += 1;
    }

    /// Outstanding allocations; zero once every owner has released.
    pub fn outstanding(&self) -> u64 {
        self.allocs - self.releases
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_release_and_high_water() {
        let mut a = PacketArena::new(100);
        a.alloc(60).unwrap();
        a.alloc(40).unwrap();
        assert_eq!(a.alloc(1), Err(ArenaFull { requested: 1, free: 0 }));
        a.release(60);
        a.alloc(10).unwrap();
        a.release(40);
        a.release(10);
        assert_eq!(a.used(), 0);
        assert_eq!(a.high_water(), 100);
        assert_eq!(a.outstanding(), 0);
    }

    #[test]
    #[should_panic]
    fn over_release_panics() {
        let mut a = PacketArena::new(10);
        a.release(1);
    }
}

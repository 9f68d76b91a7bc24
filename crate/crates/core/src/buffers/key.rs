use std::fmt;

/// IEEE 802.15.4 link-layer address: 16-bit short or 64-bit extended.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct L2Addr {
    len: u8,
    bytes: [u8; 8],
}

impl L2Addr {
    pub fn short(addr: u16) -> Self {
        let mut bytes = [0; 8];
        bytes[..2].copy_from_slice(&addr.to_be_bytes());
        Self { len: 2, bytes }
    }

    pub fn extended(addr: u64) -> Self {
        Self { len: 8, bytes: addr.to_be_bytes() }
    }

    /// Extended address derived from a node id, as used by the simulator.
    pub fn for_node(id: u16) -> Self {
        Self::extended(0x0200_0000_0000_0000 | id as u64)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }
}

impl fmt::Debug for L2Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.as_bytes().iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Identity of a fragmented datagram on one link: source and destination
/// link-layer addresses, datagram size and tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DatagramKey {
    pub l2_src: L2Addr,
    pub l2_dst: L2Addr,
    pub datagram_size: u16,
    pub datagram_tag: u16,
}

//! 6LoWPAN fragmentation: RFC 4944 FRAG1/FRAGN headers, datagram splitting
//! and first-fragment re-fragmentation.

mod fragmenter;
mod header;

use serde::{Deserialize, Serialize};

pub use fragmenter::{
    fragment_datagram, refragment_first, CompressionHeader, FragmentError, FragmentPolicy, Fragment,
    Packetized,
};
pub use header::{
    decode, encode_frag1, encode_fragn, CodecError, FragHeader, FragNHeader, Frag1Header,
    FRAG1_HEADER_LEN, FRAGN_HEADER_LEN, MAX_DATAGRAM_SIZE,
};

/// IPv6 (40) + UDP (8) header bytes before compression.
pub const UNCOMPRESSED_HEADER_LEN: usize = 48;

/// Frame budget used to turn UDP payload sizes into frames.
///
/// The default is an IEEE 802.15.4 frame of at most 127 bytes with long
/// source/destination addresses and no PAN ID compression (25 bytes of MAC
/// header + FCS), leaving a 102-byte SDU. With a 24-byte compressed
/// IPv6/UDP header this gives 96 payload bytes per FRAGN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameModel {
    /// Largest PSDU, MAC header and FCS included.
    pub mtu: usize,
    pub l2_overhead: usize,
    /// Preamble, SFD and PHR.
    pub phy_overhead: usize,
    /// Compressed IPv6/UDP header size emitted by senders.
    pub compressed_header: usize,
    pub max_compressed_header: usize,
}

impl Default for FrameModel {
    fn default() -> Self {
        Self { mtu: 127, l2_overhead: 25, phy_overhead: 6, compressed_header: 24, max_compressed_header: 40 }
    }
}

impl FrameModel {
    pub fn sdu(&self) -> usize {
        self.mtu - self.l2_overhead
    }

    pub fn datagram_size(&self, udp_payload: usize) -> usize {
        UNCOMPRESSED_HEADER_LEN + udp_payload
    }

    /// Number of link frames a UDP payload of `udp_payload` bytes needs.
    pub fn frame_count(&self, udp_payload: usize, policy: FragmentPolicy) -> Result<usize, FragmentError> {
        let datagram = vec![0u8; self.datagram_size(udp_payload)];
        let comp = CompressionHeader::new(self.compressed_header, datagram[..UNCOMPRESSED_HEADER_LEN].to_vec());
        fragment_datagram(&datagram, &comp, 0, self.sdu(), policy).map(|p| p.frame_count())
    }
}

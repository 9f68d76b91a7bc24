//! Per-node 6LoWPAN layer: traffic generation, static routing and the
//! forwarding strategies.

mod stack;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::buffers::{DEFAULT_FRAG_BUFFER_SLOTS, DEFAULT_REASSEMBLY_TIMEOUT_US};
use crate::frag_codec::{CompressionHeader, Fragment, FragmentPolicy, FrameModel, UNCOMPRESSED_HEADER_LEN};
use crate::sim_core::Micros;
use crate::vrb::DEFAULT_VRB_ENTRIES;

pub use stack::{LossCause, NodeStack, StackCounters, StackOut};

pub type NodeId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Hop-wise reassembly.
    Hwr,
    /// Fragment forwarding through the virtual reassembly buffer.
    Ff,
    /// Fragment forwarding that holds fragments until the whole datagram passed.
    FfQueued,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Hwr, Strategy::Ff, Strategy::FfQueued];

    /// Fragmentation policy used when this node fragments a datagram.
    pub fn policy(self) -> FragmentPolicy {
        match self {
            Strategy::Hwr => FragmentPolicy::FillFirst,
            Strategy::Ff | Strategy::FfQueued => FragmentPolicy::MinimalFirst,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Hwr => "hwr",
            Strategy::Ff => "ff",
            Strategy::FfQueued => "ff_queued",
        }
    }

    pub fn forwards_fragments(self) -> bool {
        !matches!(self, Strategy::Hwr)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hwr" => Ok(Strategy::Hwr),
            "ff" => Ok(Strategy::Ff),
            "ff_queued" => Ok(Strategy::FfQueued),
            other => Err(format!("unknown strategy {other:?} (expected hwr, ff or ff_queued)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sink,
    /// Generates traffic and forwards.
    Source,
    /// Forwards only.
    Forwarder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub id: NodeId,
    pub role: Role,
    /// `None` exactly for the sink.
    pub next_hop: Option<NodeId>,
    pub hop_distance: u32,
    pub strategy: Strategy,
    pub rbuf_entries: usize,
    pub vrb_entries: usize,
}

/// Traffic generated by each source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppFlow {
    pub payload_size: usize,
    /// Uniform inter-send interval bounds in seconds.
    pub interval_s: [f64; 2],
    pub packet_count: u32,
}

impl Default for AppFlow {
    fn default() -> Self {
        Self { payload_size: 80, interval_s: [5.0, 15.0], packet_count: 100 }
    }
}

/// Stack parameters shared by all nodes of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackParams {
    pub frame: FrameModel,
    /// CPU time to handle one received frame.
    pub processing_delay_us: Micros,
    pub reassembly_timeout_us: Micros,
    pub vrb_lifetime_us: Micros,
    pub frag_buffer_slots: usize,
    /// `None` for an unbounded packet buffer.
    pub arena_capacity: Option<usize>,
    /// Extra compressed-header bytes each forwarder adds to the first fragment.
    pub header_growth_per_hop: usize,
    /// Drop a VRB entry once every byte of its datagram has been forwarded.
    pub vrb_release_on_complete: bool,
    /// A forwarded first fragment briefly needs a free reassembly entry
    /// before its VRB entry exists, so a full reassembly buffer drops it.
    pub first_fragment_via_rbuf: bool,
    /// Under fragment forwarding with queueing, a datagram whose fragments
    /// are held back occupies a reassembly entry until they are released.
    pub queued_holds_rbuf_entry: bool,
    pub sink_rbuf_entries: usize,
    /// Nodes that only relay and never originate datagrams.
    pub forwarder_rbuf_entries: usize,
    /// Nodes that originate datagrams.
    pub node_rbuf_entries: usize,
    pub vrb_entries: usize,
}

impl Default for StackParams {
    fn default() -> Self {
        Self {
            frame: FrameModel::default(),
            processing_delay_us: 2_000,
            reassembly_timeout_us: DEFAULT_REASSEMBLY_TIMEOUT_US,
            vrb_lifetime_us: DEFAULT_REASSEMBLY_TIMEOUT_US,
            frag_buffer_slots: DEFAULT_FRAG_BUFFER_SLOTS,
            arena_capacity: Some(crate::buffers::DEFAULT_ARENA_CAPACITY),
            header_growth_per_hop: 0,
            vrb_release_on_complete: false,
            first_fragment_via_rbuf: true,
            queued_holds_rbuf_entry: true,
            sink_rbuf_entries: 16,
            forwarder_rbuf_entries: 16,
            node_rbuf_entries: 1,
            vrb_entries: DEFAULT_VRB_ENTRIES,
        }
    }
}

impl StackParams {
    /// Buffers large enough that nothing is ever dropped for lack of space.
    pub fn unbounded(mut self) -> Self {
        self.arena_capacity = None;
        self.frag_buffer_slots = 4096;
        self.sink_rbuf_entries = 4096;
        self.forwarder_rbuf_entries = 4096;
        self.node_rbuf_entries = 4096;
        self.vrb_entries = 4096;
        self
    }
}

/// End-to-end identity of a datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatagramUid {
    pub src: NodeId,
    pub seq: u32,
}

/// Deterministic datagram content: an IPv6+UDP-sized header followed by the
/// payload, all derived from `(uid, dst, payload_len)` so the receiver can
/// check what arrives.
pub fn build_datagram(uid: DatagramUid, dst: NodeId, payload_len: usize) -> Vec<u8> {
    let mut d = Vec::with_capacity(UNCOMPRESSED_HEADER_LEN + payload_len);
    let mut hdr = [0u8; UNCOMPRESSED_HEADER_LEN];
    hdr[0] = 0x60;
    let plen = (payload_len + 8) as u16;
    hdr[4..6].copy_from_slice(&plen.to_be_bytes());
    hdr[6] = 17;
    hdr[7] = 64;
    hdr[8..10].copy_from_slice(&[0xfe, 0x80]);
    hdr[22..24].copy_from_slice(&uid.src.to_be_bytes());
    hdr[24..26].copy_from_slice(&[0xfe, 0x80]);
    hdr[38..40].copy_from_slice(&dst.to_be_bytes());
    hdr[40..42].copy_from_slice(&0xf0b0u16.to_be_bytes());
    hdr[42..44].copy_from_slice(&0xf0b1u16.to_be_bytes());
    hdr[44..46].copy_from_slice(&plen.to_be_bytes());
    d.extend_from_slice(&hdr);
    let mut x = (uid.src as u32) << 16 ^ uid.seq.wrapping_mul(0x9e37_79b9);
    for _ in 0..payload_len {
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        d.push(x as u8);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameBody {
    /// Unfragmented datagram.
    Whole { comp: CompressionHeader, payload: Vec<u8> },
    Frag(Fragment),
}

impl FrameBody {
    /// Bytes in the link SDU.
    pub fn sdu_len(&self) -> usize {
        match self {
            FrameBody::Whole { comp, payload } => comp.size_bytes + payload.len(),
            FrameBody::Frag(f) => f.wire_len(),
        }
    }

    /// Uncompressed byte offset this body starts at.
    pub fn offset(&self) -> usize {
        match self {
            FrameBody::Whole { .. } => 0,
            FrameBody::Frag(f) => f.covered().start,
        }
    }
}

/// Who handed a frame to the MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Paced out of a fragmentation-buffer slot.
    Slot(crate::buffers::SlotId),
    /// Forwarded or unfragmented; owns `charge` arena bytes.
    Direct,
}

/// A link-layer frame in flight between two neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub src: NodeId,
    pub dst: NodeId,
    pub body: FrameBody,
    pub uid: DatagramUid,
    /// Nodes the datagram has left so far, origin first.
    pub path: Vec<NodeId>,
    pub origin: Origin,
    pub charge: usize,
}

impl Frame {
    pub fn wire_len(&self, model: &FrameModel) -> usize {
        model.l2_overhead + self.body.sdu_len()
    }
}

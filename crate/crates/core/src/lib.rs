//! 6LoWPAN fragment forwarding vs. hop-wise reassembly: protocol building
//! blocks and a deterministic discrete-event simulator of a lossy 802.15.4
//! mesh.

pub mod buffers;
pub mod frag_codec;
pub mod link_mac;
pub mod node_stack;
pub mod sim_core;
pub mod vrb;
pub mod topology;
pub mod metrics;
pub mod network;
pub mod harness;

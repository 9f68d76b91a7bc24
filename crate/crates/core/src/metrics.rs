//! Per-run measurements and the checks every run must pass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::link_mac::MacCounters;
use crate::node_stack::{DatagramUid, LossCause, NodeId, Role, StackCounters, Strategy};
use crate::sim_core::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagramRecord {
    pub uid: DatagramUid,
    pub hops: u32,
    pub fragments: usize,
    pub sent_at: SimTime,
    pub delivered_at: Option<SimTime>,
    pub cause: Option<LossCause>,
}

impl DatagramRecord {
    pub fn latency_us(&self) -> Option<u64> {
        self.delivered_at.map(|t| t - self.sent_at)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub role: Role,
    pub hops: u32,
    pub mac: MacCounters,
    pub stack: StackCounters,
    pub pktbuf_high_water: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub payload: usize,
    pub seed: u64,
    pub datagrams: Vec<DatagramRecord>,
    pub nodes: Vec<NodeRecord>,
    /// Broken internal invariants; empty on a healthy run.
    pub violations: Vec<String>,
    pub end_time: SimTime,
    pub events: u64,
}

impl RunMetrics {
    pub fn sent(&self) -> usize {
        self.datagrams.len()
    }

    pub fn delivered(&self) -> usize {
        self.datagrams.iter().filter(|d| d.delivered_at.is_some()).count()
    }

    pub fn pdr(&self) -> f64 {
        if self.datagrams.is_empty() {
            return 0.0;
        }
        self.delivered() as f64 / self.sent() as f64
    }

    /// Frames per datagram in this run (all datagrams share one payload size).
    pub fn fragments(&self) -> usize {
        self.datagrams.first().map_or(0, |d| d.fragments)
    }

    pub fn loss_histogram(&self) -> BTreeMap<LossCause, usize> {
        let mut h = BTreeMap::new();
        for d in &self.datagrams {
            if let Some(c) = d.cause {
                *h.entry(c).or_default() += 1;
            }
        }
        h
    }

    /// Latency samples in microseconds keyed by the source's hop distance.
    pub fn latency_by_hops(&self) -> BTreeMap<u32, Vec<u64>> {
        let mut m: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for d in &self.datagrams {
            if let Some(l) = d.latency_us() {
                m.entry(d.hops).or_default().push(l);
            }
        }
        m
    }

    fn non_sink(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.iter().filter(|n| n.role != Role::Sink)
    }

    /// Mean L2 retransmissions over all nodes.
    pub fn mean_l2_retransmissions(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        self.nodes.iter().map(|n| n.mac.l2_retransmissions as f64).sum::<f64>() / self.nodes.len() as f64
    }

    pub fn rbuf_full_total(&self) -> u64 {
        self.nodes.iter().map(|n| n.stack.rbuf_full).sum()
    }

    /// `(first-fragment-missing, all)` reassembly timeouts on non-sink nodes.
    pub fn forwarder_timeouts(&self) -> (u64, u64) {
        self.non_sink().fold((0, 0), |(m, t), n| (m + n.stack.rbuf_timeouts_first_missing, t + n.stack.rbuf_timeouts))
    }

    pub fn pktbuf_high_water(&self) -> usize {
        self.nodes.iter().map(|n| n.pktbuf_high_water).max().unwrap_or(0)
    }

    /// Violations of run-level conservation rules, on top of those recorded
    /// while the run executed.
    pub fn check(&self) -> Vec<String> {
        let mut v = self.violations.clone();
        for d in &self.datagrams {
            match (d.delivered_at, d.cause) {
                (Some(_), Some(c)) => v.push(format!("{:?} delivered but lost to {}", d.uid, c.name())),
                (None, None) => v.push(format!("{:?} lost without a cause", d.uid)),
                _ => {}
            }
        }
        let lost: usize = self.loss_histogram().values().sum();
        if self.delivered() + lost != self.sent() {
            v.push(format!("delivered {} + lost {lost} != sent {}", self.delivered(), self.sent()));
        }
        for n in &self.nodes {
            let m = &n.mac;
            if m.l2_retransmissions != m.tx_attempts - m.first_attempts {
                v.push(format!("node {}: retransmissions do not match attempts", n.id));
            }
        }
        v
    }
}

use std::collections::BTreeMap;

use fragsim::network::TxRecord;
use fragsim::node_stack::{DatagramUid, NodeId};
use fragsim::sim_core::LinkModel;
use fragsim::topology::Topology;

/// Nodes `0..n` on a line 3 m apart, routed toward sink 0, all links perfect.
pub fn line(n: u16) -> Topology {
    let positions = (0..n).map(|i| (i, [3.0 * i as f64, 0.0, 0.0])).collect();
    let mut links = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && a.abs_diff(b) == 1 {
                links.push(LinkModel { src: a, dst: b, pdr: 1.0, in_range: true });
            }
        }
    }
    Topology {
        sink: 0,
        positions,
        links,
        routes: (1..n).map(|i| (i, i - 1)).collect(),
        hop_distance: (0..n).map(|i| (i, i as u32)).collect(),
    }
}

/// Datagrams per link in the order their last frame crossed it.
pub fn per_hop_order(log: &[TxRecord]) -> BTreeMap<(NodeId, NodeId), Vec<DatagramUid>> {
    let mut last: BTreeMap<(NodeId, NodeId), BTreeMap<DatagramUid, u64>> = BTreeMap::new();
    for r in log {
        last.entry((r.sender, r.dest)).or_default().insert(r.uid, r.time.0);
    }
    last.into_iter()
        .map(|(link, m)| {
            let mut v: Vec<_> = m.into_iter().collect();
            v.sort_by_key(|&(uid, t)| (t, uid));
            (link, v.into_iter().map(|(uid, _)| uid).collect())
        })
        .collect()
}

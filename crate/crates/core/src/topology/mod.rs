//! Network selection over a site plan and the topology file format.

mod file;
mod site;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::node_stack::NodeId;
use crate::sim_core::{LinkModel, PdrCurve};

pub use file::{load_topology, parse_site_plan, parse_topology, save_topology, write_site_plan, write_topology, FORMAT_VERSION};
pub use site::{SitePlan, SiteParams, SitePoint};

/// Members besides the sink.
pub const DEFAULT_MEMBERS: usize = 49;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("node selection ran out of candidates after {found} of {wanted} members")]
    Exhausted { found: usize, wanted: usize },
    #[error("sink {0} is not in the site plan")]
    UnknownSink(NodeId),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` wrapper so [`TopologyError`] can stay `PartialEq`.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct IoError(pub std::io::Error);

impl PartialEq for IoError {
    fn eq(&self, other: &Self) -> bool {
        self.0.kind() == other.0.kind()
    }
}

/// Distance gates for picking new tree members.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRule {
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub sink_children: usize,
    pub min_children: usize,
    pub max_children: usize,
    pub members: usize,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self { min_distance_m: 2.2, max_distance_m: 6.6, sink_children: 2, min_children: 1, max_children: 3, members: DEFAULT_MEMBERS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub sink: NodeId,
    pub positions: BTreeMap<NodeId, [f64; 3]>,
    /// Directed links between members in radio range.
    pub links: Vec<LinkModel>,
    /// Next hop toward the sink for every member except the sink.
    pub routes: BTreeMap<NodeId, NodeId>,
    pub hop_distance: BTreeMap<NodeId, u32>,
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Topology {
    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.positions.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_hops(&self) -> u32 {
        self.hop_distance.values().copied().max().unwrap_or(0)
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.routes.iter().filter(|(_, &p)| p == id).map(|(&c, _)| c).collect()
    }

    /// Whether some node relays for two or more children.
    pub fn has_bottleneck(&self) -> bool {
        let mut count: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &p in self.routes.values() {
            *count.entry(p).or_default() += 1;
        }
        count.iter().any(|(&n, &c)| n != self.sink && c >= 2)
    }

    /// Copy with every link delivering perfectly.
    pub fn lossless(&self) -> Topology {
        let mut t = self.clone();
        for l in &mut t.links {
            l.pdr = 1.0;
        }
        t
    }

    /// Checks tree shape, hop distances and link sanity.
    pub fn validate(&self) -> Result<(), TopologyError> {
        let bad = |m: String| Err(TopologyError::Invalid(m));
        if !self.positions.contains_key(&self.sink) {
            return bad(format!("sink {} has no position", self.sink));
        }
        if self.routes.contains_key(&self.sink) {
            return bad("sink has a route".into());
        }
        for (&from, &to) in &self.routes {
            if !self.positions.contains_key(&from) || !self.positions.contains_key(&to) {
                return bad(format!("route {from} -> {to} names an unknown node"));
            }
        }
        for id in self.members() {
            if id == self.sink {
                continue;
            }
            let mut cur = id;
            let mut hops = 0u32;
            while cur != self.sink {
                let Some(&next) = self.routes.get(&cur) else {
                    return bad(format!("node {cur} has no route"));
                };
                cur = next;
                hops += 1;
                if hops as usize > self.len() {
                    return bad(format!("route loop from {id}"));
                }
            }
            if self.hop_distance.get(&id) != Some(&hops) {
                return bad(format!("hop distance of {id} should be {hops}"));
            }
        }
        if self.hop_distance.get(&self.sink).is_some_and(|&h| h != 0) {
            return bad("sink hop distance must be 0".into());
        }
        for l in &self.links {
            if !self.positions.contains_key(&l.src) || !self.positions.contains_key(&l.dst) {
                return bad(format!("link {} -> {} names an unknown node", l.src, l.dst));
            }
            if !(0.0..=1.0).contains(&l.pdr) {
                return bad(format!("link {} -> {} has pdr {}", l.src, l.dst, l.pdr));
            }
        }
        let linked: BTreeSet<(NodeId, NodeId)> = self.links.iter().map(|l| (l.src, l.dst)).collect();
        for (&from, &to) in &self.routes {
            if !linked.contains(&(from, to)) {
                return bad(format!("route {from} -> {to} has no radio link"));
            }
        }
        Ok(())
    }
}

/// Breadth-first member selection from `sink`.
///
/// Each expanded node adopts a uniform sample of the unvisited nodes within
/// the distance gates (the sink exactly `sink_children`, others between
/// `min_children` and `max_children`) until `rule.members` nodes joined.
pub fn build_topology(
    plan: &SitePlan,
    sink: NodeId,
    seed: u64,
    rule: &SelectionRule,
    curve: &PdrCurve,
) -> Result<Topology, TopologyError> {
    let pos: BTreeMap<NodeId, [f64; 3]> = plan.nodes.iter().map(|p| (p.id, p.pos)).collect();
    if !pos.contains_key(&sink) {
        return Err(TopologyError::UnknownSink(sink));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visited: BTreeSet<NodeId> = BTreeSet::from([sink]);
    let mut routes = BTreeMap::new();
    let mut hops = BTreeMap::from([(sink, 0u32)]);
    let mut queue = VecDeque::from([sink]);
    let mut found = 0;
    while found < rule.members {
        let Some(u) = queue.pop_front() else {
            return Err(TopologyError::Exhausted { found, wanted: rule.members });
        };
        let candidates: Vec<NodeId> = pos
            .iter()
            .filter(|(id, p)| {
                let d = distance(pos[&u], **p);
                !visited.contains(id) && d >= rule.min_distance_m && d <= rule.max_distance_m
            })
            .map(|(&id, _)| id)
            .collect();
        let k = if u == sink { rule.sink_children } else { rng.gen_range(rule.min_children..=rule.max_children) };
        let k = k.min(candidates.len()).min(rule.members - found);
        let chosen: Vec<NodeId> = candidates.choose_multiple(&mut rng, k).copied().collect();
        for c in chosen {
            visited.insert(c);
            routes.insert(c, u);
            hops.insert(c, hops[&u] + 1);
            queue.push_back(c);
            found += 1;
        }
    }
    let positions: BTreeMap<NodeId, [f64; 3]> = visited.iter().map(|id| (*id, pos[id])).collect();
    let mut links = Vec::new();
    for (&a, &pa) in &positions {
        for (&b, &pb) in &positions {
            if a == b {
                continue;
            }
            if let Some(pdr) = curve.pdr(distance(pa, pb)) {
                links.push(LinkModel { src: a, dst: b, pdr, in_range: true });
            }
        }
    }
    let topo = Topology { sink, positions, links, routes, hop_distance: hops };
    topo.validate()?;
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(points: &[(NodeId, f64, f64)]) -> SitePlan {
        SitePlan { nodes: points.iter().map(|&(id, x, y)| SitePoint { id, pos: [x, y, 0.0] }).collect() }
    }

    #[test]
    fn all_nodes_too_close_is_an_error() {
        let pts: Vec<_> = (0..60).map(|i| (i as NodeId, (i % 8) as f64 * 0.2, (i / 8) as f64 * 0.2)).collect();
        let err = build_topology(&plan(&pts), 0, 1, &SelectionRule::default(), &PdrCurve::default()).unwrap_err();
        assert_eq!(err, TopologyError::Exhausted { found: 0, wanted: 49 });
    }

    #[test]
    fn sink_with_two_candidates_takes_both() {
        let p = plan(&[(0, 0.0, 0.0), (1, 3.0, 0.0), (2, 0.0, 3.0), (3, 1.0, 0.0)]);
        let rule = SelectionRule { members: 2, ..SelectionRule::default() };
        let t = build_topology(&p, 0, 9, &rule, &PdrCurve::default()).unwrap();
        assert_eq!(t.children(0), vec![1, 2]);
        assert_eq!(t.max_hops(), 1);
    }

    #[test]
    fn synthetic_plan_builds_valid_trees() {
        let site = SitePlan::synthetic(&SiteParams::default(), 1);
        let mut ok = 0;
        for seed in 0..20 {
            let Ok(t) = build_topology(&site, site.default_sink(), seed, &SelectionRule::default(), &PdrCurve::default())
            else {
                continue;
            };
            ok += 1;
            assert_eq!(t.len(), 50);
            assert_eq!(t.children(t.sink).len(), 2);
            for (&c, &p) in &t.routes {
                let d = distance(t.positions[&c], t.positions[&p]);
                assert!((2.2..=6.6).contains(&d), "{c}->{p} at {d}");
            }
            let in_range: Vec<_> = t.links.iter().filter(|l| l.pdr < 0.975).collect();
            assert!(in_range.is_empty());
        }
        assert!(ok > 0);
    }
}

//! Line-oriented topology files.
//!
//! ```text
//! # comment
//! version 1
//! sink 12
//! node 12 1.5 3 1
//! route 7 12
//! link 7 12 0.9931
//! ```
//!
//! `node` lines carry id and x y z in meters, `route` lines a next hop toward
//! the sink, `link` lines a directed radio link and its delivery probability.
//! Hop distances are derived from the routes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::node_stack::NodeId;
use crate::sim_core::LinkModel;

use super::{IoError, SitePlan, SitePoint, Topology, TopologyError};

pub const FORMAT_VERSION: u32 = 1;

pub fn write_topology(t: &Topology) -> String {
    let mut s = String::new();
    writeln!(s, "# fragsim topology: {} nodes, max {} hops", t.len(), t.max_hops()).unwrap();
    writeln!(s, "version {FORMAT_VERSION}").unwrap();
    writeln!(s, "sink {}", t.sink).unwrap();
    for (id, p) in &t.positions {
        writeln!(s, "node {id} {} {} {}", p[0], p[1], p[2]).unwrap();
    }
    for (from, to) in &t.routes {
        writeln!(s, "route {from} {to}").unwrap();
    }
    for l in &t.links {
        writeln!(s, "link {} {} {}", l.src, l.dst, l.pdr).unwrap();
    }
    s
}

pub fn save_topology(t: &Topology, path: &Path) -> Result<(), TopologyError> {
    std::fs::write(path, write_topology(t)).map_err(|e| TopologyError::Io(IoError(e)))
}

pub fn load_topology(path: &Path) -> Result<Topology, TopologyError> {
    let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Io(IoError(e)))?;
    parse_topology(&text)
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, TopologyError> {
    let tok = tok.ok_or_else(|| TopologyError::Parse { line, msg: format!("missing {what}") })?;
    tok.parse().map_err(|_| TopologyError::Parse { line, msg: format!("bad {what} {tok:?}") })
}

fn finite(v: f64, line: usize) -> Result<f64, TopologyError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TopologyError::Parse { line, msg: format!("non-finite coordinate {v}") })
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a str, std::str::SplitWhitespace<'a>);
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (i, raw) = self.inner.next()?;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut toks = content.split_whitespace();
            let kw = toks.next().expect("non-empty");
            return Some((i + 1, kw, toks));
        }
    }
}

fn lines(text: &str) -> Lines<'_> {
    Lines { inner: text.lines().enumerate() }
}

fn no_extra(mut toks: std::str::SplitWhitespace<'_>, line: usize) -> Result<(), TopologyError> {
    match toks.next() {
        Some(t) => Err(TopologyError::Parse { line, msg: format!("unexpected {t:?}") }),
        None => Ok(()),
    }
}

pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let mut sink: Option<NodeId> = None;
    let mut positions = BTreeMap::new();
    let mut routes = BTreeMap::new();
    let mut links = Vec::new();
    let mut route_lines = Vec::new();
    let mut link_lines = Vec::new();
    let mut seen_links = BTreeSet::new();
    for (line, kw, mut toks) in lines(text) {
        match kw {
            "version" => {
                let v: u32 = field(toks.next(), line, "version")?;
                if v != FORMAT_VERSION {
                    return Err(TopologyError::Parse { line, msg: format!("unsupported version {v}") });
                }
            }
            "sink" => {
                if sink.is_some() {
                    return Err(TopologyError::Parse { line, msg: "second sink".into() });
                }
                sink = Some(field(toks.next(), line, "sink id")?);
            }
            "node" => {
                let id: NodeId = field(toks.next(), line, "node id")?;
                let x = finite(field(toks.next(), line, "x")?, line)?;
                let y = finite(field(toks.next(), line, "y")?, line)?;
                let z = finite(field(toks.next(), line, "z")?, line)?;
                if positions.insert(id, [x, y, z]).is_some() {
                    return Err(TopologyError::Parse { line, msg: format!("duplicate node {id}") });
                }
            }
            "route" => {
                let from: NodeId = field(toks.next(), line, "route source")?;
                let to: NodeId = field(toks.next(), line, "route next hop")?;
                if routes.insert(from, to).is_some() {
                    return Err(TopologyError::Parse { line, msg: format!("second route for {from}") });
                }
                route_lines.push((line, from, to));
            }
            "link" => {
                let src: NodeId = field(toks.next(), line, "link source")?;
                let dst: NodeId = field(toks.next(), line, "link destination")?;
                let pdr: f64 = field(toks.next(), line, "pdr")?;
                if !(0.0..=1.0).contains(&pdr) {
                    return Err(TopologyError::Parse { line, msg: format!("pdr {pdr} outside [0, 1]") });
                }
                if !seen_links.insert((src, dst)) {
                    return Err(TopologyError::Parse { line, msg: format!("duplicate link {src} {dst}") });
                }
                links.push(LinkModel { src, dst, pdr, in_range: true });
                link_lines.push((line, src, dst));
            }
            other => return Err(TopologyError::Parse { line, msg: format!("unknown keyword {other:?}") }),
        }
        no_extra(toks, line)?;
    }
    let sink = sink.ok_or(TopologyError::Parse { line: 0, msg: "no sink line".into() })?;
    if !positions.contains_key(&sink) {
        return Err(TopologyError::Invalid(format!("sink {sink} has no node line")));
    }
    for (line, from, to) in route_lines {
        for id in [from, to] {
            if !positions.contains_key(&id) {
                return Err(TopologyError::Parse { line, msg: format!("unknown node {id} in route") });
            }
        }
    }
    for (line, src, dst) in link_lines {
        for id in [src, dst] {
            if !positions.contains_key(&id) {
                return Err(TopologyError::Parse { line, msg: format!("unknown node {id} in link") });
            }
        }
    }
    let mut hop_distance = BTreeMap::from([(sink, 0u32)]);
    for &id in positions.keys() {
        let mut cur = id;
        let mut hops = 0u32;
        while cur != sink {
            let Some(&next) = routes.get(&cur) else {
                return Err(TopologyError::Invalid(format!("node {cur} has no route to the sink")));
            };
            cur = next;
            hops += 1;
            if hops as usize > positions.len() {
                return Err(TopologyError::Invalid(format!("route loop from {id}")));
            }
        }
        hop_distance.insert(id, hops);
    }
    let t = Topology { sink, positions, links, routes, hop_distance };
    t.validate()?;
    Ok(t)
}

/// Reads only the `node` lines of a file, as a site plan.
pub fn parse_site_plan(text: &str) -> Result<SitePlan, TopologyError> {
    let mut nodes = Vec::new();
    let mut ids = BTreeSet::new();
    for (line, kw, mut toks) in lines(text) {
        if kw != "node" {
            continue;
        }
        let id: NodeId = field(toks.next(), line, "node id")?;
        let x = finite(field(toks.next(), line, "x")?, line)?;
        let y = finite(field(toks.next(), line, "y")?, line)?;
        let z = finite(field(toks.next(), line, "z")?, line)?;
        no_extra(toks, line)?;
        if !ids.insert(id) {
            return Err(TopologyError::Parse { line, msg: format!("duplicate node {id}") });
        }
        nodes.push(SitePoint { id, pos: [x, y, z] });
    }
    Ok(SitePlan { nodes })
}

pub fn write_site_plan(plan: &SitePlan) -> String {
    let mut s = String::from("# fragsim site plan\n");
    for n in &plan.nodes {
        writeln!(s, "node {} {} {} {}", n.id, n.pos[0], n.pos[1], n.pos[2]).unwrap();
    }
    s
}

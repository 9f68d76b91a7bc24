//! Pure fold over run files into per-(strategy, payload) summaries.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Distribution, Max, Median, Min, OrderStatistics};

use crate::node_stack::{NodeId, Role, Strategy};

use super::{parse_run_file, HarnessError, RunFile};

pub const AGGREGATE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation, 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for no samples.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut d = Data::new(values.to_vec());
        let n = values.len();
        Some(Summary {
            n,
            mean: d.mean().expect("non-empty"),
            std: if n > 1 { d.std_dev().expect("n > 1") } else { 0.0 },
            min: d.min(),
            p25: d.lower_quartile(),
            median: d.median(),
            p75: d.upper_quartile(),
            max: d.max(),
        })
    }
}

/// All runs of one strategy at one payload size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub strategy: Strategy,
    pub payload: usize,
    pub fragments: usize,
    pub seeds: Vec<u64>,
    pub sent: u64,
    pub delivered: u64,
    /// Over runs.
    pub pdr: Summary,
    /// Pooled delivered-datagram latencies, milliseconds.
    pub latency_ms: Option<Summary>,
    /// Pooled latencies keyed by the source's hop distance.
    pub latency_ms_by_hops: BTreeMap<u32, Summary>,
    /// Per-run mean over all nodes.
    pub l2_retransmissions: Summary,
    /// Per node, mean over runs.
    pub l2_retransmissions_per_node: BTreeMap<NodeId, f64>,
    /// Per-run total over all nodes.
    pub rbuf_full: Summary,
    /// Per node, summed over runs.
    pub rbuf_full_per_node: BTreeMap<NodeId, u64>,
    /// Expired reassembly entries on non-sink nodes, summed over runs.
    pub rbuf_timeouts: u64,
    pub rbuf_timeouts_first_missing: u64,
    pub first_missing_share: Option<f64>,
    /// Per-run maximum over nodes, bytes.
    pub pktbuf_high_water: Summary,
    pub loss_causes: BTreeMap<String, u64>,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub format: u32,
    pub scenario_id: String,
    /// Sorted by strategy then payload.
    pub series: Vec<Series>,
}

impl Aggregate {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("aggregate serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Aggregate, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn series(&self, strategy: Strategy, payload: usize) -> Option<&Series> {
        self.series.iter().find(|s| s.strategy == strategy && s.payload == payload)
    }

    pub fn of_strategy(&self, strategy: Strategy) -> impl Iterator<Item = &Series> {
        self.series.iter().filter(move |s| s.strategy == strategy)
    }

    /// First-fragment-missing share of expired reassembly entries on non-sink
    /// nodes, pooled over every run of `strategy`.
    pub fn pooled_first_missing_share(&self, strategy: Strategy) -> Option<f64> {
        let (m, t) = self
            .of_strategy(strategy)
            .fold((0, 0), |(m, t), s| (m + s.rbuf_timeouts_first_missing, t + s.rbuf_timeouts));
        (t > 0).then(|| m as f64 / t as f64)
    }

    /// Reassembly-buffer-full events summed over every run of `strategy`.
    pub fn pooled_rbuf_full(&self, strategy: Strategy) -> u64 {
        self.of_strategy(strategy).flat_map(|s| s.rbuf_full_per_node.values()).sum()
    }
}

fn fold_series(runs: &[&RunFile]) -> Series {
    let first = &runs[0].meta;
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.meta.seed).collect();
    seeds.sort_unstable();
    let (mut sent, mut delivered) = (0u64, 0u64);
    let mut pdr = Vec::new();
    let mut latency = Vec::new();
    let mut by_hops: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut retx = Vec::new();
    let mut retx_node: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut rbuf = Vec::new();
    let mut rbuf_node: BTreeMap<NodeId, u64> = BTreeMap::new();
    let (mut timeouts, mut first_missing) = (0u64, 0u64);
    let mut pktbuf = Vec::new();
    let mut causes: BTreeMap<String, u64> = BTreeMap::new();
    let mut violations = 0u64;
    for r in runs {
        let (mut s, mut d) = (0u64, 0u64);
        for row in r.datagrams() {
            s += 1;
            if let Some(l) = row.latency_us {
                d += 1;
                let ms = l as f64 / 1000.0;
                latency.push(ms);
                by_hops.entry(row.hops).or_default().push(ms);
            }
            if let Some(c) = row.cause {
                *causes.entry(c.name().to_string()).or_default() += 1;
            }
        }
        sent += s;
        delivered += d;
        pdr.push(if s == 0 { 0.0 } else { d as f64 / s as f64 });
        let (mut n, mut retx_sum, mut rbuf_sum, mut hw) = (0usize, 0u64, 0u64, 0usize);
        for row in r.nodes() {
            n += 1;
            let rt = row.l2_retransmissions.unwrap_or(0);
            retx_sum += rt;
            *retx_node.entry(row.id).or_default() += rt as f64;
            let rf = row.rbuf_full.unwrap_or(0);
            rbuf_sum += rf;
            *rbuf_node.entry(row.id).or_default() += rf;
            if row.role != Some(Role::Sink) {
                timeouts += row.rbuf_timeouts.unwrap_or(0);
                first_missing += row.rbuf_timeouts_first_missing.unwrap_or(0);
            }
            hw = hw.max(row.pktbuf_high_water.unwrap_or(0));
        }
        retx.push(if n == 0 { 0.0 } else { retx_sum as f64 / n as f64 });
        rbuf.push(rbuf_sum as f64);
        pktbuf.push(hw as f64);
        violations += r.meta.violations.len() as u64;
    }
    for v in retx_node.values_mut() {
        *v /= runs.len() as f64;
    }
    Series {
        strategy: first.strategy,
        payload: first.payload,
        fragments: first.fragments,
        seeds,
        sent,
        delivered,
        pdr: Summary::of(&pdr).expect("at least one run"),
        latency_ms: Summary::of(&latency),
        latency_ms_by_hops: by_hops.into_iter().map(|(h, v)| (h, Summary::of(&v).expect("non-empty"))).collect(),
        l2_retransmissions: Summary::of(&retx).expect("at least one run"),
        l2_retransmissions_per_node: retx_node,
        rbuf_full: Summary::of(&rbuf).expect("at least one run"),
        rbuf_full_per_node: rbuf_node,
        rbuf_timeouts: timeouts,
        rbuf_timeouts_first_missing: first_missing,
        first_missing_share: (timeouts > 0).then(|| first_missing as f64 / timeouts as f64),
        pktbuf_high_water: Summary::of(&pktbuf).expect("at least one run"),
        loss_causes: causes,
        violations,
    }
}

/// Refuses inputs from more than one scenario and repeated runs.
pub fn aggregate(files: &[RunFile]) -> Result<Aggregate, HarnessError> {
    let first = files.first().ok_or(HarnessError::NoRuns)?;
    let id = &first.meta.scenario_id;
    if let Some(other) = files.iter().find(|f| &f.meta.scenario_id != id) {
        return Err(HarnessError::MixedScenarios { first: id.clone(), other: other.meta.scenario_id.clone() });
    }
    let mut groups: BTreeMap<(Strategy, usize), Vec<&RunFile>> = BTreeMap::new();
    for f in files {
        let g = groups.entry((f.meta.strategy, f.meta.payload)).or_default();
        if g.iter().any(|o| o.meta.seed == f.meta.seed) {
            return Err(HarnessError::Config(format!(
                "run {} {}B seed {} appears twice",
                f.meta.strategy, f.meta.payload, f.meta.seed
            )));
        }
        g.push(f);
    }
    Ok(Aggregate {
        format: AGGREGATE_FORMAT,
        scenario_id: id.clone(),
        series: groups.values().map(|g| fold_series(g)).collect(),
    })
}

pub fn aggregate_files(paths: &[PathBuf]) -> Result<Aggregate, HarnessError> {
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
        files.push(parse_run_file(&text, p)?);
    }
    aggregate(&files)
}

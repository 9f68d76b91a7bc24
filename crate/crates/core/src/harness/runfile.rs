//! One CSV file per run.
//!
//! Metadata comes first as `# key value` lines, then a header and one row per
//! datagram (`record = datagram`) followed by one row per node
//! (`record = node`). Columns that do not apply to a record kind stay empty.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::RunMetrics;
use crate::node_stack::{LossCause, NodeId, Role, Strategy};

use super::HarnessError;

pub const RUN_FILE_MAGIC: &str = "fragsim run v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub scenario_id: String,
    pub strategy: Strategy,
    pub payload: usize,
    pub fragments: usize,
    pub seed: u64,
    pub end_time_us: u64,
    pub events: u64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Datagram,
    Node,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRow {
    pub record: RecordKind,
    /// Source for datagrams, the node itself for nodes.
    pub id: NodeId,
    pub hops: u32,
    pub seq: Option<u32>,
    pub sent_us: Option<u64>,
    pub delivered_us: Option<u64>,
    pub latency_us: Option<u64>,
    pub cause: Option<LossCause>,
    pub role: Option<Role>,
    pub tx_attempts: Option<u64>,
    pub l2_retransmissions: Option<u64>,
    pub csma_failures: Option<u64>,
    pub acked: Option<u64>,
    pub retrans_exhausted: Option<u64>,
    pub queue_drops: Option<u64>,
    pub busy_losses: Option<u64>,
    pub collisions: Option<u64>,
    pub rbuf_full: Option<u64>,
    pub rbuf_timeouts: Option<u64>,
    pub rbuf_timeouts_first_missing: Option<u64>,
    pub vrb_created: Option<u64>,
    pub vrb_full: Option<u64>,
    pub vrb_timeouts: Option<u64>,
    pub fallbacks: Option<u64>,
    pub forwarded_fragments: Option<u64>,
    pub pktbuf_high_water: Option<usize>,
}

impl RunRow {
    fn empty(record: RecordKind, id: NodeId, hops: u32) -> Self {
        RunRow {
            record,
            id,
            hops,
            seq: None,
            sent_us: None,
            delivered_us: None,
            latency_us: None,
            cause: None,
            role: None,
            tx_attempts: None,
            l2_retransmissions: None,
            csma_failures: None,
            acked: None,
            retrans_exhausted: None,
            queue_drops: None,
            busy_losses: None,
            collisions: None,
            rbuf_full: None,
            rbuf_timeouts: None,
            rbuf_timeouts_first_missing: None,
            vrb_created: None,
            vrb_full: None,
            vrb_timeouts: None,
            fallbacks: None,
            forwarded_fragments: None,
            pktbuf_high_water: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub meta: RunMeta,
    pub rows: Vec<RunRow>,
}

impl RunFile {
    pub fn from_metrics(m: &RunMetrics, scenario_id: &str) -> RunFile {
        let meta = RunMeta {
            scenario_id: scenario_id.to_string(),
            strategy: m.strategy,
            payload: m.payload,
            fragments: m.fragments(),
            seed: m.seed,
            end_time_us: m.end_time.0,
            events: m.events,
            violations: m.check(),
        };
        let mut rows = Vec::with_capacity(m.datagrams.len() + m.nodes.len());
        for d in &m.datagrams {
            let mut r = RunRow::empty(RecordKind::Datagram, d.uid.src, d.hops);
            r.seq = Some(d.uid.seq);
            r.sent_us = Some(d.sent_at.0);
            r.delivered_us = d.delivered_at.map(|t| t.0);
            r.latency_us = d.latency_us();
            r.cause = d.cause;
            rows.push(r);
        }
        for n in &m.nodes {
            let mut r = RunRow::empty(RecordKind::Node, n.id, n.hops);
            r.role = Some(n.role);
            r.tx_attempts = Some(n.mac.tx_attempts);
            r.l2_retransmissions = Some(n.mac.l2_retransmissions);
            r.csma_failures = Some(n.mac.csma_failures);
            r.acked = Some(n.mac.acked);
            r.retrans_exhausted = Some(n.mac.retrans_exhausted);
            r.queue_drops = Some(n.mac.queue_drops);
            r.busy_losses = Some(n.mac.busy_losses);
            r.collisions = Some(n.mac.collisions);
            r.rbuf_full = Some(n.stack.rbuf_full);
            r.rbuf_timeouts = Some(n.stack.rbuf_timeouts);
            r.rbuf_timeouts_first_missing = Some(n.stack.rbuf_timeouts_first_missing);
            r.vrb_created = Some(n.stack.vrb_created);
            r.vrb_full = Some(n.stack.vrb_full);
            r.vrb_timeouts = Some(n.stack.vrb_timeouts);
            r.fallbacks = Some(n.stack.fallbacks);
            r.forwarded_fragments = Some(n.stack.forwarded_fragments);
            r.pktbuf_high_water = Some(n.pktbuf_high_water);
            rows.push(r);
        }
        RunFile { meta, rows }
    }

    pub fn datagrams(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.record == RecordKind::Datagram)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.record == RecordKind::Node)
    }
}

pub fn write_run_file(f: &RunFile) -> String {
    let m = &f.meta;
    let mut s = String::new();
    writeln!(s, "# {RUN_FILE_MAGIC}").unwrap();
    writeln!(s, "# scenario_id {}", m.scenario_id).unwrap();
    writeln!(s, "# strategy {}", m.strategy).unwrap();
    writeln!(s, "# payload {}", m.payload).unwrap();
    writeln!(s, "# fragments {}", m.fragments).unwrap();
    writeln!(s, "# seed {}", m.seed).unwrap();
    writeln!(s, "# end_time_us {}", m.end_time_us).unwrap();
    writeln!(s, "# events {}", m.events).unwrap();
    for v in &m.violations {
        writeln!(s, "# violation {}", v.replace('\n', " ")).unwrap();
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &f.rows {
        w.serialize(r).expect("row serializes");
    }
    s.push_str(&String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv"));
    s
}

pub fn parse_run_file(text: &str, path: &Path) -> Result<RunFile, HarnessError> {
    let err = |message: String| HarnessError::Parse { path: path.to_path_buf(), message };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(&format!("# {RUN_FILE_MAGIC}")) {
        return Err(err(format!("missing '# {RUN_FILE_MAGIC}' first line")));
    }
    let mut kv = std::collections::BTreeMap::new();
    let mut violations = Vec::new();
    for line in text.lines().skip(1).take_while(|l| l.starts_with('#')) {
        let (k, v) = line[1..].trim().split_once(' ').unwrap_or((line[1..].trim(), ""));
        if k == "violation" {
            violations.push(v.to_string());
        } else {
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| err(format!("missing metadata '{k}'")));
    let num = |k: &str| get(k)?.parse::<u64>().map_err(|e| err(format!("metadata '{k}': {e}")));
    let meta = RunMeta {
        scenario_id: get("scenario_id")?.clone(),
        strategy: get("strategy")?.parse().map_err(err)?,
        payload: num("payload")? as usize,
        fragments: num("fragments")? as usize,
        seed: num("seed")?,
        end_time_us: num("end_time_us")?,
        events: num("events")?,
        violations,
    };
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize::<RunRow>().enumerate() {
        rows.push(r.map_err(|e| err(format!("row {}: {e}", i + 1)))?);
    }
    Ok(RunFile { meta, rows })
}

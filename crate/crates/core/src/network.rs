//! One simulated deployment: nodes with a MAC and a 6LoWPAN stack on a shared
//! medium, driven by the event queue.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::link_mac::{Mac, MacParams, MacStep};
use crate::metrics::{DatagramRecord, NodeRecord, RunMetrics};
use crate::node_stack::{
    build_datagram, AppFlow, DatagramUid, Frame, NodeConfig, NodeId, NodeStack, Role, StackOut,
    StackParams, Strategy,
};
use crate::sim_core::{EventQueue, Medium, Micros, SimTime, TxId};
use crate::topology::Topology;

/// Period of buffer garbage collection while timed state is alive.
pub const GC_INTERVAL_US: Micros = 1_000_000;

/// A lifetime no run reaches (about 31 years).
pub const NEVER_US: Micros = 1_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub strategy: Strategy,
    pub stack: StackParams,
    pub mac: MacParams,
    pub flow: AppFlow,
    /// Overlapping frames destroy each other at common receivers.
    pub interference: bool,
    pub seed: u64,
    /// Keep a line per simulation event.
    pub trace: bool,
}

impl NetworkConfig {
    pub fn new(strategy: Strategy, flow: AppFlow, seed: u64) -> Self {
        Self {
            strategy,
            stack: StackParams::default(),
            mac: MacParams::default(),
            flow,
            interference: true,
            seed,
            trace: false,
        }
    }

    /// A medium and buffers that cannot lose a datagram. Receivers can still
    /// be busy, so frames are retried until acknowledged and partial state
    /// never expires.
    pub fn lossless(mut self) -> Self {
        self.stack = self.stack.unbounded();
        self.stack.reassembly_timeout_us = NEVER_US;
        self.stack.vrb_lifetime_us = NEVER_US;
        self.stack.vrb_release_on_complete = true;
        self.mac.queue_capacity = usize::MAX;
        self.mac.retry_until_acked = true;
        self.interference = false;
        self
    }
}

#[derive(Debug)]
enum Action {
    AppSend(usize),
    Process(usize, Box<Frame>),
    Kick(usize),
    Retry(usize),
    Cca(usize),
    TxStart(usize),
    TxEnd(usize, TxId),
    AckTimeout(usize),
    Gc,
}

struct NodeState {
    mac: Mac<Frame>,
    stack: NodeStack,
    cpu_free: SimTime,
    /// Transmission currently being received.
    receiving: Option<TxId>,
    remaining_sends: u32,
}

/// One transmission start, for ordering comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRecord {
    pub time: SimTime,
    pub sender: NodeId,
    pub dest: NodeId,
    pub uid: DatagramUid,
    pub offset: usize,
    pub retransmission: bool,
}

pub struct Network {
    cfg: NetworkConfig,
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    sink: NodeId,
    hops: Vec<u32>,
    nodes: Vec<NodeState>,
    medium: Medium,
    queue: EventQueue<Action>,
    rng: ChaCha8Rng,
    datagrams: BTreeMap<DatagramUid, DatagramRecord>,
    violations: Vec<String>,
    trace: Vec<String>,
    tx_log: Vec<TxRecord>,
    events: u64,
}

impl Network {
    pub fn new(topo: &Topology, cfg: NetworkConfig) -> Self {
        let ids: Vec<NodeId> = topo.members().collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let sink_children = topo.children(topo.sink);
        let mut medium = Medium::new(
            ids.len(),
            topo.links.iter().filter(|l| l.in_range).map(|l| (index[&l.src], index[&l.dst], l.pdr)),
        );
        medium.set_interference(cfg.interference);
        let mut nodes = Vec::with_capacity(ids.len());
        let mut hops = Vec::with_capacity(ids.len());
        for &id in &ids {
            let role = if id == topo.sink {
                Role::Sink
            } else if sink_children.contains(&id) {
                Role::Forwarder
            } else {
                Role::Source
            };
            let rbuf_entries = match role {
                Role::Sink => cfg.stack.sink_rbuf_entries,
                Role::Forwarder => cfg.stack.forwarder_rbuf_entries,
                Role::Source => cfg.stack.node_rbuf_entries,
            };
            let nc = NodeConfig {
                id,
                role,
                next_hop: topo.routes.get(&id).copied(),
                hop_distance: topo.hop_distance[&id],
                strategy: cfg.strategy,
                rbuf_entries,
                vrb_entries: cfg.stack.vrb_entries,
            };
            hops.push(nc.hop_distance);
            nodes.push(NodeState {
                mac: Mac::new(cfg.mac.clone()),
                stack: NodeStack::new(nc, cfg.stack.clone()),
                cpu_free: SimTime::ZERO,
                receiving: None,
                remaining_sends: if role == Role::Source { cfg.flow.packet_count } else { 0 },
            });
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            ids,
            index,
            sink: topo.sink,
            hops,
            nodes,
            medium,
            queue: EventQueue::new(),
            rng,
            datagrams: BTreeMap::new(),
            violations: Vec::new(),
            trace: Vec::new(),
            tx_log: Vec::new(),
            events: 0,
            cfg,
        }
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    fn interval(&mut self) -> Micros {
        let [lo, hi] = self.cfg.flow.interval_s;
        let lo = (lo * 1e6).round() as u64;
        let hi = (hi * 1e6).round() as u64;
        self.rng.gen_range(lo..=hi.max(lo))
    }

    fn note(&mut self, node: usize, kind: &str, detail: impl FnOnce() -> String) {
        if self.cfg.trace {
            let line = format!("{} {} {} {}", self.queue.now(), self.ids[node], kind, detail());
            self.trace.push(line);
        }
    }

    /// Runs until no event remains and returns the measurements.
    pub fn run(mut self) -> RunOutput {
        for i in 0..self.nodes.len() {
            if self.nodes[i].remaining_sends > 0 {
                let d = self.interval();
                self.queue.schedule_in(d, Action::AppSend(i));
            }
        }
        self.queue.schedule_in(GC_INTERVAL_US, Action::Gc);
        while let Some((_, action)) = self.queue.pop() {
            self.events += 1;
            self.handle(action);
        }
        self.finish()
    }

    fn handle(&mut self, action: Action) {
        let now = self.queue.now();
        match action {
            Action::AppSend(i) => {
                let payload = self.cfg.flow.payload_size;
                let mut out = Vec::new();
                let uid = self.nodes[i].stack.app_send(self.sink, payload, now, &mut out);
                let fragments = self.cfg.stack.frame.frame_count(payload, self.cfg.strategy.policy()).expect("payload fits");
                self.datagrams.insert(
                    uid,
                    DatagramRecord { uid, hops: self.hops[i], fragments, sent_at: now, delivered_at: None, cause: None },
                );
                self.note(i, "send", || format!("{}:{}", uid.src, uid.seq));
                self.apply(i, out);
                let n = &mut self.nodes[i];
                n.remaining_sends -= 1;
                if n.remaining_sends > 0 {
                    let d = self.interval();
                    self.queue.schedule_in(d, Action::AppSend(i));
                }
            }
            Action::Process(i, frame) => {
                let mut out = Vec::new();
                self.note(i, "rx", || format!("{}:{} off={}", frame.uid.src, frame.uid.seq, frame.body.offset()));
                self.nodes[i].stack.on_frame(*frame, now, &mut out);
                self.apply(i, out);
            }
            Action::Kick(i) => {
                let step = self.nodes[i].mac.kick(now, &mut self.rng);
                self.mac_step(i, step);
            }
            Action::Retry(i) => {
                let step = self.nodes[i].mac.on_retry_timer(now, &mut self.rng);
                self.mac_step(i, step);
            }
            Action::Cca(i) => {
                let clear = !self.medium.channel_busy(i);
                let step = self.nodes[i].mac.on_cca(clear, &mut self.rng);
                self.mac_step(i, step);
            }
            Action::TxStart(i) => self.tx_start(i, now),
            Action::TxEnd(i, tx) => self.tx_end(i, tx, now),
            Action::AckTimeout(i) => {
                let step = self.nodes[i].mac.on_ack_timeout(&mut self.rng);
                self.mac_step(i, step);
            }
            Action::Gc => {
                let mut timed = false;
                for i in 0..self.nodes.len() {
                    let mut out = Vec::new();
                    self.nodes[i].stack.gc(now, &mut out);
                    self.apply(i, out);
                    timed |= self.nodes[i].stack.has_timed_state();
                }
                if timed || !self.queue.is_empty() {
                    self.queue.schedule_in(GC_INTERVAL_US, Action::Gc);
                }
            }
        }
    }

    fn tx_start(&mut self, i: usize, now: SimTime) {
        let len = self.nodes[i].mac.on_tx_start(now);
        let airtime = self.cfg.mac.airtime_us(len);
        let (frame, _) = self.nodes[i].mac.current().expect("frame in flight");
        let dest = self.index[&frame.dst];
        let rec = TxRecord {
            time: now,
            sender: self.ids[i],
            dest: frame.dst,
            uid: frame.uid,
            offset: frame.body.offset(),
            retransmission: self.nodes[i].mac.current_attempt().is_some_and(|a| a > 0),
        };
        let (tx, reached) = self.medium.begin(i, dest, now, airtime, &mut self.rng);
        if reached {
            if self.nodes[dest].mac.begin_rx(now + airtime) {
                self.nodes[dest].receiving = Some(tx);
            } else {
                let from = self.ids[i];
                self.note(dest, "busy", || format!("from {from}"));
            }
        }
        if self.cfg.trace {
            self.tx_log.push(rec);
            self.note(i, "tx", || format!("{}:{} off={} to {} len={len}", rec.uid.src, rec.uid.seq, rec.offset, rec.dest));
        }
        self.queue.schedule_in(airtime, Action::TxEnd(i, tx));
    }

    fn tx_end(&mut self, i: usize, tx: TxId, now: SimTime) {
        let t = self.medium.end(tx);
        let dest = t.dest;
        let received = self.nodes[dest].receiving == Some(tx);
        let acked = received && !t.corrupted;
        if received {
            self.nodes[dest].receiving = None;
            self.nodes[dest].mac.end_rx(t.corrupted);
            if acked {
                let (frame, _) = self.nodes[i].mac.current().expect("frame in flight");
                let frame = Box::new(frame.clone());
                let delay = self.cfg.stack.processing_delay_us;
                let start = now.max(self.nodes[dest].cpu_free);
                let done = start + delay;
                self.nodes[dest].cpu_free = done;
                self.queue.schedule_at(done, Action::Process(dest, frame));
            }
            self.queue.schedule_at(now, Action::Kick(dest));
        }
        let step = self.nodes[i].mac.on_tx_end(now, acked);
        self.mac_step(i, step);
    }

    fn mac_step(&mut self, i: usize, step: MacStep<Frame>) {
        match step {
            MacStep::Idle => {}
            MacStep::Cca(d) => self.queue.schedule_in(d, Action::Cca(i)),
            MacStep::Transmit(d) => self.queue.schedule_in(d, Action::TxStart(i)),
            MacStep::AwaitAck(d) => self.queue.schedule_in(d, Action::AckTimeout(i)),
            MacStep::RetryAt(t) => self.queue.schedule_at(t, Action::Retry(i)),
            MacStep::Done { frame, acked } => {
                self.note(i, if acked { "acked" } else { "gave_up" }, || {
                    format!("{}:{} off={}", frame.uid.src, frame.uid.seq, frame.body.offset())
                });
                let mut out = Vec::new();
                self.nodes[i].stack.on_tx_done(frame, acked, &mut out);
                self.apply(i, out);
                let step = self.nodes[i].mac.kick(self.queue.now(), &mut self.rng);
                self.mac_step(i, step);
            }
        }
    }

    /// Carries out stack effects for node `i`.
    fn apply(&mut self, i: usize, mut out: Vec<StackOut>) {
        let now = self.queue.now();
        let mut enqueued = false;
        while !out.is_empty() {
            let mut more = Vec::new();
            for o in out.drain(..) {
                match o {
                    StackOut::Enqueue(frame) => {
                        let len = frame.wire_len(&self.cfg.stack.frame);
                        if let Err(frame) = self.nodes[i].mac.enqueue(frame, len) {
                            self.nodes[i].stack.on_queue_drop(frame, &mut more);
                        } else {
                            enqueued = true;
                        }
                    }
                    StackOut::Deliver { uid, data } => self.deliver(uid, data, now),
                    StackOut::Loss { uid, cause } => {
                        let Some(rec) = self.datagrams.get_mut(&uid) else {
                            self.violations.push(format!("loss of unknown datagram {uid:?}"));
                            continue;
                        };
                        if rec.delivered_at.is_none() && rec.cause.is_none() {
                            rec.cause = Some(cause);
                        }
                    }
                    StackOut::RbufFull | StackOut::RbufTimeout { .. } => {}
                    StackOut::Violation(v) => self.violations.push(format!("node {}: {v}", self.ids[i])),
                }
            }
            out = more;
        }
        if enqueued {
            let step = self.nodes[i].mac.kick(now, &mut self.rng);
            self.mac_step(i, step);
        }
    }

    fn deliver(&mut self, uid: DatagramUid, data: Vec<u8>, now: SimTime) {
        let sink = self.sink;
        let payload = self.cfg.flow.payload_size;
        let Some(rec) = self.datagrams.get_mut(&uid) else {
            self.violations.push(format!("delivered unknown datagram {uid:?}"));
            return;
        };
        if rec.delivered_at.is_some() {
            self.violations.push(format!("{uid:?} delivered twice"));
            return;
        }
        if data != build_datagram(uid, sink, payload) {
            self.violations.push(format!("{uid:?} delivered with altered content"));
        }
        if let Some(c) = rec.cause.take() {
            self.violations.push(format!("{uid:?} delivered after loss to {}", c.name()));
        }
        rec.delivered_at = Some(now);
    }

    fn finish(mut self) -> RunOutput {
        for (i, n) in self.nodes.iter().enumerate() {
            let id = self.ids[i];
            if n.stack.arena_used() != 0 {
                self.violations.push(format!("node {id}: {} arena bytes never released", n.stack.arena_used()));
            }
            if n.stack.frag_slots_in_use() != 0 || n.mac.queue_len() != 0 || n.stack.has_timed_state() {
                self.violations.push(format!("node {id}: state left at end of run"));
            }
        }
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| NodeRecord {
                id: self.ids[i],
                role: n.stack.config().role,
                hops: self.hops[i],
                mac: n.mac.counters,
                stack: n.stack.counters,
                pktbuf_high_water: n.stack.arena().high_water(),
            })
            .collect();
        let metrics = RunMetrics {
            strategy: self.cfg.strategy,
            payload: self.cfg.flow.payload_size,
            seed: self.cfg.seed,
            datagrams: self.datagrams.into_values().collect(),
            nodes,
            violations: self.violations,
            end_time: self.queue.now(),
            events: self.events,
        };
        RunOutput { metrics, trace: self.trace, tx_log: self.tx_log }
    }
}

pub struct RunOutput {
    pub metrics: RunMetrics,
    /// One line per traced event, when tracing was on.
    pub trace: Vec<String>,
    pub tx_log: Vec<TxRecord>,
}

impl RunOutput {
    pub fn trace_text(&self) -> String {
        let mut s = String::new();
        for l in &self.trace {
            writeln!(s, "{l}").unwrap();
        }
        s
    }
}

/// Convenience: build and run one simulation.
pub fn simulate(topo: &Topology, cfg: NetworkConfig) -> RunOutput {
    Network::new(topo, cfg).run()
}

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::link_mac::MacParams;
use crate::network::NetworkConfig;
use crate::node_stack::{AppFlow, StackParams, Strategy};
use crate::topology::{load_topology, write_topology, Topology};

use super::{HarnessError, TABLE1};

pub const SCENARIO_VERSION: u32 = 1;

/// One experiment: every strategy × payload combination, run once per seed.
///
/// Unset buffer and MAC fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Relative paths resolve against the scenario file's directory.
    pub topology: PathBuf,
    pub strategies: Vec<Strategy>,
    /// UDP payload bytes, each one of the reference payload sizes.
    pub payloads: Vec<usize>,
    #[serde(default = "default_interval")]
    pub interval_s: [f64; 2],
    #[serde(default = "default_packets")]
    pub packets_per_source: u32,
    #[serde(default = "default_runs")]
    pub runs: u32,
    /// One seed per run.
    pub seeds: Vec<u64>,
    /// Perfect links, no interference, unbounded buffers and retries.
    #[serde(default)]
    pub lossless: bool,
    #[serde(default)]
    pub stack: StackParams,
    #[serde(default)]
    pub mac: MacParams,
}

fn default_interval() -> [f64; 2] {
    AppFlow::default().interval_s
}

fn default_packets() -> u32 {
    AppFlow::default().packet_count
}

fn default_runs() -> u32 {
    3
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a scenario and anchors its topology path at the file's directory.
    pub fn from_file(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut s = toml::from_str::<Scenario>(&text)
            .map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        if s.topology.is_relative() {
            if let Some(dir) = path.parent() {
                s.topology = dir.join(&s.topology);
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks every field and loads the topology. Nothing runs before this
    /// succeeds.
    pub fn validate(&self) -> Result<Topology, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.version != SCENARIO_VERSION {
            return bad(format!("version {} is not supported (expected {SCENARIO_VERSION})", self.version));
        }
        if self.strategies.is_empty() {
            return bad("no strategies".into());
        }
        if self.strategies.iter().collect::<BTreeSet<_>>().len() != self.strategies.len() {
            return bad("duplicate strategy".into());
        }
        if self.payloads.is_empty() {
            return bad("no payloads".into());
        }
        for p in &self.payloads {
            if !TABLE1.iter().any(|&(_, payload)| payload == *p) {
                return bad(format!("payload {p} is not one of the reference payload sizes"));
            }
        }
        if self.payloads.iter().collect::<BTreeSet<_>>().len() != self.payloads.len() {
            return bad("duplicate payload".into());
        }
        let [lo, hi] = self.interval_s;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return bad(format!("send interval [{lo}, {hi}] must satisfy 0 <= lo <= hi"));
        }
        if self.packets_per_source == 0 {
            return bad("packets_per_source must be positive".into());
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if self.seeds.len() != self.runs as usize {
            return bad(format!("{} seeds given for {} runs", self.seeds.len(), self.runs));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("duplicate seed".into());
        }
        let s = &self.stack;
        if s.sink_rbuf_entries == 0 || s.forwarder_rbuf_entries == 0 || s.node_rbuf_entries == 0 {
            return bad("reassembly buffers need at least one entry".into());
        }
        if s.vrb_entries == 0 || s.frag_buffer_slots == 0 {
            return bad("VRB and fragmentation buffer need at least one entry".into());
        }
        if self.mac.min_be > self.mac.max_be {
            return bad("mac.min_be exceeds mac.max_be".into());
        }
        if self.mac.queue_capacity == 0 {
            return bad("mac.queue_capacity must be positive".into());
        }
        if !self.topology.exists() {
            return bad(format!("topology file {} does not exist", self.topology.display()));
        }
        let topo = load_topology(&self.topology).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(if self.lossless { topo.lossless() } else { topo })
    }

    /// Hex SHA-256 over the scenario settings and the topology contents.
    /// The topology path itself does not contribute.
    pub fn id(&self, topo: &Topology) -> String {
        let mut s = self.clone();
        s.topology = PathBuf::new();
        let mut h = Sha256::new();
        h.update(s.to_toml().as_bytes());
        h.update(b"\n--\n");
        h.update(write_topology(topo).as_bytes());
        hex::encode(h.finalize())
    }

    pub fn network_config(&self, strategy: Strategy, payload: usize, seed: u64) -> NetworkConfig {
        let flow = AppFlow { payload_size: payload, interval_s: self.interval_s, packet_count: self.packets_per_source };
        let mut cfg = NetworkConfig::new(strategy, flow, seed);
        cfg.stack = self.stack.clone();
        cfg.mac = self.mac.clone();
        if self.lossless {
            cfg = cfg.lossless();
        }
        cfg
    }
}

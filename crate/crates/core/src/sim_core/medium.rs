use rand::Rng;
use serde::{Deserialize, Serialize};

use super::time::{Micros, SimTime};

/// Distance to delivery-probability mapping.
///
/// `1.0` up to `full_range_m`, linear down to `edge_pdr` at `max_range_m`,
/// out of range beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdrCurve {
    pub full_range_m: f64,
    pub max_range_m: f64,
    pub edge_pdr: f64,
}

impl Default for PdrCurve {
    fn default() -> Self {
        Self { full_range_m: 2.2, max_range_m: 6.6, edge_pdr: 0.975 }
    }
}

impl PdrCurve {
    /// `None` when the pair is out of radio range.
    pub fn pdr(&self, distance_m: f64) -> Option<f64> {
        if distance_m <= self.full_range_m {
            Some(1.0)
        } else if distance_m <= self.max_range_m {
            let frac = (distance_m - self.full_range_m) / (self.max_range_m - self.full_range_m);
            Some(1.0 - frac * (1.0 - self.edge_pdr))
        } else {
            None
        }
    }
}

/// A directed radio link between two in-range nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub src: u16,
    pub dst: u16,
    pub pdr: f64,
    pub in_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

#[derive(Debug, Clone)]
pub struct Transmission {
    pub id: TxId,
    pub sender: usize,
    pub dest: usize,
    pub start: SimTime,
    pub end: SimTime,
    /// Per node: whether this frame's energy reached it.
    pub audible: Vec<bool>,
    /// Overlapped at `dest` by another audible transmission.
    pub corrupted: bool,
}

/// Shared channel: who hears whom, and which frames overlap where.
///
/// Two transmissions audible at the same receiver destroy each other there
/// (no capture). Audibility is drawn per transmission and per in-range node
/// from the link PDR.
#[derive(Debug, Clone)]
pub struct Medium {
    pdr: Vec<Vec<f64>>,
    neighbors: Vec<Vec<usize>>,
    ongoing: Vec<Transmission>,
    next_id: u64,
    interference: bool,
}

impl Medium {
    /// `links` are `(a, b, pdr)` over node indices `0..n`; each link is used
    /// in the direction given, so pass both directions for symmetric links.
    pub fn new(n: usize, links: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut pdr = vec![vec![0.0; n]; n];
        let mut neighbors = vec![Vec::new(); n];
        for (a, b, p) in links {
            if a == b {
                continue;
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
            }
            pdr[a][b] = p;
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self { pdr, neighbors, ongoing: Vec::new(), next_id: 0, interference: true }
    }

    /// With interference off, overlapping frames never destroy each other.
    pub fn set_interference(&mut self, on: bool) {
        self.interference = on;
    }

    pub fn node_count(&self) -> usize {
        self.pdr.len()
    }

    pub fn pdr(&self, from: usize, to: usize) -> f64 {
        self.pdr[from][to]
    }

    pub fn in_range(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Clear channel assessment: busy if any in-range node is transmitting.
    pub fn channel_busy(&self, node: usize) -> bool {
        self.ongoing.iter().any(|t| self.in_range(t.sender, node))
    }

    pub fn is_transmitting(&self, node: usize) -> bool {
        self.ongoing.iter().any(|t| t.sender == node)
    }

    pub fn ongoing(&self) -> &[Transmission] {
        &self.ongoing
    }

    /// Puts a frame on the air. Returns its id and whether it reached `dest`.
    pub fn begin<R: Rng>(&mut self, sender: usize, dest: usize, now: SimTime, airtime: Micros, rng: &mut R) -> (TxId, bool) {
        let n = self.node_count();
        let mut audible = vec![false; n];
        for &nb in &self.neighbors[sender] {
            let p = self.pdr[sender][nb];
            audible[nb] = p >= 1.0 || (p > 0.0 && rng.gen::<f64>() < p);
        }
        let mut corrupted = false;
        for other in self.ongoing.iter_mut().filter(|_| self.interference) {
            if audible[other.dest] {
                other.corrupted = true;
            }
            if other.audible[dest] {
                corrupted = true;
            }
        }
        let id = TxId(self.next_id);
        self.next_id += 1;
        let reached = audible[dest];
        self.ongoing.push(Transmission { id, sender, dest, start: now, end: now + airtime, audible, corrupted });
        (id, reached)
    }

    /// Takes a finished frame off the air.
    pub fn end(&mut self, id: TxId) -> Transmission {
        let i = self.ongoing.iter().position(|t| t.id == id).expect("unknown transmission");
        self.ongoing.swap_remove(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, p: f64) -> Medium {
        let mut links = Vec::new();
        for i in 0..n - 1 {
            links.push((i, i + 1, p));
            links.push((i + 1, i, p));
        }
        Medium::new(n, links)
    }

    #[test]
    fn curve_shape() {
        let c = PdrCurve::default();
        assert_eq!(c.pdr(1.0), Some(1.0));
        assert_eq!(c.pdr(2.2), Some(1.0));
        assert!((c.pdr(4.4).unwrap() - 0.9875).abs() < 1e-12);
        assert!((c.pdr(6.6).unwrap() - 0.975).abs() < 1e-12);
        assert_eq!(c.pdr(6.61), None);
    }

    #[test]
    fn pdr_one_always_and_zero_never() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = line(2, 1.0);
        for i in 0..100 {
            let (id, ok) = m.begin(0, 1, SimTime(i * 10), 5, &mut rng);
            assert!(ok);
            m.end(id);
        }
        let mut m = line(2, 0.0);
        for i in 0..100 {
            let (id, ok) = m.begin(0, 1, SimTime(i * 10), 5, &mut rng);
            assert!(!ok);
            m.end(id);
        }
    }

    #[test]
    fn monte_carlo_matches_link_pdr() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = line(2, 0.975);
        let n = 10_000;
        let mut hits = 0;
        for i in 0..n {
            let (id, ok) = m.begin(0, 1, SimTime(i * 10), 5, &mut rng);
            hits += ok as u32;
            m.end(id);
        }
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.975).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn simultaneous_senders_collide_at_shared_receiver() {
        // 0 -> 1 <- 2, 0 and 2 hidden from each other
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = line(3, 1.0);
        let (a, _) = m.begin(0, 1, SimTime(0), 100, &mut rng);
        assert!(!m.channel_busy(2) || m.in_range(0, 2));
        let (b, _) = m.begin(2, 1, SimTime(0), 100, &mut rng);
        assert!(m.end(a).corrupted);
        assert!(m.end(b).corrupted);
    }

    #[test]
    fn cca_hears_in_range_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = line(3, 1.0);
        let (a, _) = m.begin(0, 1, SimTime(0), 100, &mut rng);
        assert!(m.channel_busy(1));
        assert!(!m.channel_busy(2));
        let t = m.end(a);
        assert!(!t.corrupted);
        assert!(!m.channel_busy(1));
    }
}

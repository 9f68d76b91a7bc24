use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::node_stack::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SitePoint {
    pub id: NodeId,
    /// Meters.
    pub pos: [f64; 3],
}

/// Candidate node positions of a deployment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SitePlan {
    pub nodes: Vec<SitePoint>,
}

/// Shape of the synthetic deployment: a densely populated grid room with a
/// strip of sparsely populated offices running off one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteParams {
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub grid_pitch_m: f64,
    pub grid_jitter_m: f64,
    pub offices: usize,
    pub office_width_m: f64,
    pub office_depth_m: f64,
    pub nodes_per_office: usize,
    /// Gap between the grid room and the first office.
    pub corridor_m: f64,
}

impl Default for SiteParams {
    fn default() -> Self {
        Self {
            grid_cols: 6,
            grid_rows: 5,
            grid_pitch_m: 1.2,
            grid_jitter_m: 0.15,
            offices: 14,
            office_width_m: 3.0,
            office_depth_m: 4.0,
            nodes_per_office: 3,
            corridor_m: 2.0,
        }
    }
}

impl SitePlan {
    /// Grid ids come first, row by row; office ids follow.
    pub fn synthetic(p: &SiteParams, seed: u64) -> SitePlan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::new();
        let mut id: NodeId = 0;
        let jitter = |rng: &mut ChaCha8Rng| {
            if p.grid_jitter_m > 0.0 {
                rng.gen_range(-p.grid_jitter_m..p.grid_jitter_m)
            } else {
                0.0
            }
        };
        for r in 0..p.grid_rows {
            for c in 0..p.grid_cols {
                let x = c as f64 * p.grid_pitch_m + jitter(&mut rng);
                let y = r as f64 * p.grid_pitch_m + jitter(&mut rng);
                nodes.push(SitePoint { id, pos: [x, y, 1.0] });
                id += 1;
            }
        }
        let x0 = (p.grid_cols.saturating_sub(1)) as f64 * p.grid_pitch_m + p.corridor_m;
        for o in 0..p.offices {
            for _ in 0..p.nodes_per_office {
                let x = x0 + o as f64 * p.office_width_m + rng.gen_range(0.0..p.office_width_m);
                let y = rng.gen_range(0.0..p.office_depth_m);
                let z = rng.gen_range(0.5..2.0);
                nodes.push(SitePoint { id, pos: [x, y, z] });
                id += 1;
            }
        }
        SitePlan { nodes }
    }

    /// First grid node, at the room corner opposite the offices.
    pub fn default_sink(&self) -> NodeId {
        self.nodes.first().map_or(0, |n| n.id)
    }
}

//! Square-well lattice potentials on a uniform transverse grid.
//!
//! Lengths are in units of the trap width `D`, energies in units of the
//! zero-phonon line. The barrier level between wells is the energy zero and
//! every well is a depression of depth `V_l`, so `V(x) = -V_l` inside well `l`.
//!
//! The grid holds only interior nodes `x_i = (i + 1) D / (N + 1)`; the hard
//! walls at `0` and `D` are implicit zero-amplitude nodes.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of grid nodes that must fall inside every well.
pub const MIN_NODES_PER_WELL: usize = 8;

/// Largest admissible disorder degree, as a fraction of the base depth.
pub const MAX_DISORDER_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Number of wells, `s + 1`.
    pub num_wells: usize,
    /// Width of each well, `Δw`.
    pub well_width: f64,
    /// Edge-to-edge gap between neighbouring wells, `Δd`.
    pub well_spacing: f64,
    /// Trap width `D`.
    pub total_width: f64,
    /// Base well depth `V_0`.
    pub base_depth: f64,
    /// Number of interior grid nodes.
    pub grid_points: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            num_wells: 11,
            well_width: 0.004,
            well_spacing: 0.002,
            total_width: 1.0,
            base_depth: 0.5,
            grid_points: 2048,
        }
    }
}

impl LatticeSpec {
    /// Centre-to-centre distance between neighbouring wells.
    pub fn pitch(&self) -> f64 {
        self.well_width + self.well_spacing
    }

    /// Total extent of the lattice, first well's left edge to last well's right edge.
    pub fn extent(&self) -> f64 {
        let n = self.num_wells as f64;
        n * self.well_width + (n - 1.0) * self.well_spacing
    }

    pub fn grid_step(&self) -> f64 {
        self.total_width / (self.grid_points as f64 + 1.0)
    }

    /// Nominal well centres; the lattice is centred in the trap.
    pub fn well_centers(&self) -> Vec<f64> {
        let left = 0.5 * (self.total_width - self.extent());
        (0..self.num_wells)
            .map(|l| left + l as f64 * self.pitch() + 0.5 * self.well_width)
            .collect()
    }

    pub fn trap_center(&self) -> f64 {
        0.5 * self.total_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_wells < 1 {
            return Err(Error::Geometry("num_wells must be at least 1".into()));
        }
        if !(self.well_width > 0.0) {
            return Err(Error::Geometry("well_width must be positive".into()));
        }
        if !(self.well_spacing >= 0.0) {
            return Err(Error::Geometry("well_spacing must be non-negative".into()));
        }
        if !(self.total_width > 0.0) {
            return Err(Error::Geometry("total_width must be positive".into()));
        }
        if !(self.base_depth > 0.0) {
            return Err(Error::Depth("base_depth must be positive".into()));
        }
        if self.extent() > self.total_width * (1.0 + 1e-12) {
            return Err(Error::Geometry(format!(
                "{} wells of width {} with gap {} span {} > trap width {}",
                self.num_wells,
                self.well_width,
                self.well_spacing,
                self.extent(),
                self.total_width
            )));
        }
        let nodes = self.nodes_per_well();
        if nodes < MIN_NODES_PER_WELL {
            return Err(Error::Geometry(format!(
                "each well spans only {nodes} grid nodes (need >= {MIN_NODES_PER_WELL}); increase grid_points"
            )));
        }
        if self.node_span() > self.grid_points {
            return Err(Error::Geometry("lattice does not fit on the grid".into()));
        }
        Ok(())
    }

    fn nodes_per_well(&self) -> usize {
        (self.well_width / self.grid_step()).round() as usize
    }

    /// Node index ranges `[start, end)` covered by each well. Every well gets
    /// the same node count and neighbouring wells are a whole number of
    /// nodes apart, so the discrete lattice is exactly periodic. The profile
    /// is mirror-symmetric whenever the unused node count is even.
    fn node_pitch(&self) -> usize {
        (self.pitch() / self.grid_step()).round() as usize
    }

    fn node_span(&self) -> usize {
        (self.num_wells - 1) * self.node_pitch() + self.nodes_per_well()
    }

    fn well_node_ranges(&self) -> Vec<(usize, usize)> {
        let count = self.nodes_per_well();
        let pitch = self.node_pitch();
        let span = self.node_span();
        let start0 = self.grid_points.saturating_sub(span) / 2;
        (0..self.num_wells)
            .map(|l| {
                let start = start0 + l * pitch;
                (start, start + count)
            })
            .collect()
    }
}

/// Discretized potential together with its lattice metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    /// Depth `V_l` of every well, leftmost first.
    pub per_well_depths: Vec<f64>,
    /// Snapped well edges `(left, right)` as seen by the grid.
    pub well_edges: Vec<(f64, f64)>,
    pub spec: LatticeSpec,
    /// Seed that generated the disorder, if any.
    pub seed: Option<u64>,
}

impl PotentialProfile {
    fn from_depths(spec: &LatticeSpec, depths: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        spec.validate()?;
        if let Some((l, v)) = depths.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Depth(format!("well {l} has non-positive depth {v}")));
        }
        let dx = spec.grid_step();
        let positions: Vec<f64> = (0..spec.grid_points).map(|i| (i as f64 + 1.0) * dx).collect();
        let mut values = vec![0.0; spec.grid_points];
        let ranges = spec.well_node_ranges();
        let mut well_edges = Vec::with_capacity(ranges.len());
        for (&(start, end), &depth) in ranges.iter().zip(&depths) {
            for v in &mut values[start..end] {
                *v = -depth;
            }
            well_edges.push((positions[start] - 0.5 * dx, positions[end - 1] + 0.5 * dx));
        }
        Ok(Self {
            positions,
            values,
            per_well_depths: depths,
            well_edges,
            spec: spec.clone(),
            seed,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.spec.grid_step()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Centres of the wells as placed on the grid.
    pub fn well_centers(&self) -> Vec<f64> {
        self.well_edges.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Two-column CSV `x,V`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,V")?;
        for (x, v) in self.positions.iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }

    /// JSON provenance record: spec, well depths, and seed.
    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "per_well_depths": self.per_well_depths,
            "well_edges": self.well_edges,
            "seed": self.seed,
        })
    }
}

/// Lattice with a linear bias: well `l` has depth `V_0 - l ΔV`.
pub fn build_biased_potential(spec: &LatticeSpec, bias_step: f64) -> Result<PotentialProfile> {
    if !(bias_step >= 0.0) {
        return Err(Error::Range(format!("bias step must be non-negative, got {bias_step}")));
    }
    let depths = (0..spec.num_wells)
        .map(|l| spec.base_depth - l as f64 * bias_step)
        .collect();
    PotentialProfile::from_depths(spec, depths, None)
}

/// Lattice with random well depths `V_0 - x_l d`, `x_l` uniform in `[-1/2, 1/2)`.
pub fn build_disordered_potential(
    spec: &LatticeSpec,
    disorder_degree: f64,
    seed: u64,
) -> Result<PotentialProfile> {
    let limit = MAX_DISORDER_FRACTION * spec.base_depth;
    if !(disorder_degree >= 0.0) || disorder_degree > limit * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "disorder degree {disorder_degree} outside [0, {limit}]"
        )));
    }
    let depths = disorder_offsets(spec.num_wells, seed)
        .into_iter()
        .map(|x| spec.base_depth - x * disorder_degree)
        .collect();
    PotentialProfile::from_depths(spec, depths, Some(seed))
}

/// The per-well random numbers `x_l` drawn for `seed`.
pub fn disorder_offsets(num_wells: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_wells).map(|_| rng.gen::<f64>() - 0.5).collect()
}

//! Transverse cavity modes of a lattice potential and their overlaps with
//! the molecular spatial bins.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::PotentialProfile;
use crate::tridiag::{lowest_eigenpairs, SymTridiagonal};

/// Largest accepted eigenpair residual `‖Hψ - ωψ‖ / ‖ψ‖`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Kinetic coefficient used when none is configured. A lone well of width
/// `0.004 D` and depth `0.5` then has strength `(w/2)·sqrt(V/c) = 3` and
/// binds two states.
pub const DEFAULT_MASS_SCALE: f64 = 2.0e-6 / 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeOptions {
    /// Number of lowest eigenpairs to keep.
    pub num_modes: usize,
    /// Kinetic coefficient `c` in `H = -c d²/dx² + V`.
    pub mass_scale: f64,
    /// Modes must lie below `barrier + margin`; the barrier energy is zero.
    pub energy_margin: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            num_modes: 11,
            mass_scale: DEFAULT_MASS_SCALE,
            energy_margin: 0.0,
        }
    }
}

/// Eigenenergies (ascending) and mode functions on the profile grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub energies: Vec<f64>,
    /// `wavefunctions[k][i] = Ψ_k(x_i)` with `Σ_i Ψ_k² Δx = 1`.
    pub wavefunctions: Vec<Vec<f64>>,
    /// `intensities[k][i] = |Ψ_k(x_i)|²`.
    pub intensities: Vec<Vec<f64>>,
    pub positions: Vec<f64>,
    pub dx: f64,
    /// Largest eigenpair residual seen.
    pub max_residual: f64,
    /// Set when fewer modes than requested were bound.
    pub truncated: bool,
}

impl ModeSet {
    pub fn num_modes(&self) -> usize {
        self.energies.len()
    }

    /// Inverse participation ratio `Σ_i g_k(x_i)² Δx` of every mode.
    pub fn inverse_participation(&self) -> Vec<f64> {
        self.intensities
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>() * self.dx)
            .collect()
    }

    /// CSV with columns `x, psi_0 … psi_{K-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "x")?;
        for k in 0..self.num_modes() {
            write!(w, ",psi_{k}")?;
        }
        writeln!(w)?;
        for (i, x) in self.positions.iter().enumerate() {
            write!(w, "{x}")?;
            for psi in &self.wavefunctions {
                write!(w, ",{}", psi[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// The finite-difference Hamiltonian for `profile` with hard walls.
pub fn hamiltonian(profile: &PotentialProfile, mass_scale: f64) -> SymTridiagonal {
    let dx = profile.grid_step();
    let t = mass_scale / (dx * dx);
    let diag = profile.values.iter().map(|v| 2.0 * t + v).collect();
    let off = vec![-t; profile.len() - 1];
    SymTridiagonal::new(diag, off)
}

/// Lowest eigenmodes of the transverse Schrödinger problem.
pub fn solve_modes(profile: &PotentialProfile, opts: &ModeOptions) -> Result<ModeSet> {
    if !(opts.mass_scale > 0.0) {
        return Err(Error::Range(format!("mass_scale must be positive, got {}", opts.mass_scale)));
    }
    if opts.num_modes == 0 {
        return Err(Error::Range("num_modes must be at least 1".into()));
    }
    let h = hamiltonian(profile, opts.mass_scale);
    let cutoff = opts.energy_margin;
    let bound = h.count_below(cutoff);
    let count = opts.num_modes.min(bound).min(h.len());
    let truncated = count < opts.num_modes;
    if truncated {
        log::warn!(
            "only {bound} modes lie below the cutoff {cutoff}; requested {}",
            opts.num_modes
        );
    }
    if count == 0 {
        return Err(Error::Convergence("no bound modes below the cutoff".into()));
    }
    let eig = lowest_eigenpairs(&h, count)?;

    let dx = profile.grid_step();
    let scale = 1.0 / dx.sqrt();
    let mut max_residual = 0.0f64;
    for (k, (lam, v)) in eig.values.iter().zip(&eig.vectors).enumerate() {
        let hv = h.mul_vec(v);
        let r = hv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - lam * b).powi(2))
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(r);
        if r > RESIDUAL_TOL {
            return Err(Error::Convergence(format!("mode {k} residual {r:e} exceeds {RESIDUAL_TOL:e}")));
        }
    }
    let wavefunctions: Vec<Vec<f64>> = eig
        .vectors
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * scale).collect())
        .collect();
    let intensities = wavefunctions
        .iter()
        .map(|psi| psi.iter().map(|p| p * p).collect())
        .collect();
    Ok(ModeSet {
        energies: eig.values,
        wavefunctions,
        intensities,
        positions: profile.positions.clone(),
        dx,
        max_residual,
        truncated,
    })
}

/// How the transverse axis is partitioned into molecular bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BinLayout {
    /// `S` equal bins over `[0, D]`.
    Uniform { bins: usize },
    /// One bin per well; edges at midpoints between neighbouring well
    /// centres, the outer bins extend to the trap walls.
    PerWell,
}

impl Default for BinLayout {
    fn default() -> Self {
        BinLayout::PerWell
    }
}

impl BinLayout {
    /// Bin edges, `S + 1` values from `0` to `D`.
    pub fn edges(&self, profile: &PotentialProfile) -> Result<Vec<f64>> {
        let d = profile.spec.total_width;
        match *self {
            BinLayout::Uniform { bins } => {
                if bins == 0 {
                    return Err(Error::Range("need at least one bin".into()));
                }
                Ok((0..=bins).map(|j| d * j as f64 / bins as f64).collect())
            }
            BinLayout::PerWell => {
                let centers = profile.well_centers();
                let mut edges = Vec::with_capacity(centers.len() + 1);
                edges.push(0.0);
                edges.extend(centers.windows(2).map(|w| 0.5 * (w[0] + w[1])));
                edges.push(d);
                Ok(edges)
            }
        }
    }
}

/// Normalized mode–bin overlaps `g_{k,j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    /// `entries[k][j]`, rows sum to one.
    pub entries: Vec<Vec<f64>>,
    pub bin_edges: Vec<f64>,
}

impl OverlapMatrix {
    pub fn num_modes(&self) -> usize {
        self.entries.len()
    }

    pub fn num_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.entries[k][j]
    }
}

/// Overlaps of every mode with bins bounded by `edges` (ascending, covering the grid).
pub fn mode_overlaps_with_edges(modes: &ModeSet, edges: Vec<f64>) -> Result<OverlapMatrix> {
    if edges.len() < 2 {
        return Err(Error::Range("need at least one bin".into()));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Range("bin edges must be strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    // bin index of every grid node
    let owner: Vec<usize> = modes
        .positions
        .iter()
        .map(|&x| {
            let j = edges.partition_point(|&e| e <= x);
            j.saturating_sub(1).min(bins - 1)
        })
        .collect();
    let entries = modes
        .intensities
        .iter()
        .map(|g| {
            let mut row = vec![0.0; bins];
            for (v, &j) in g.iter().zip(&owner) {
                row[j] += v;
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect();
    Ok(OverlapMatrix {
        entries,
        bin_edges: edges,
    })
}

pub fn mode_overlaps(
    modes: &ModeSet,
    profile: &PotentialProfile,
    layout: &BinLayout,
) -> Result<OverlapMatrix> {
    mode_overlaps_with_edges(modes, layout.edges(profile)?)
}

/// Median over interior sites of `g_{k+1,k}`: the overlap of the mode on
/// site `k + 1` with the bin of its left neighbour. Modes are taken in
/// energy order, one per site.
pub fn nn_overlap(overlaps: &OverlapMatrix) -> Result<f64> {
    let s = overlaps.num_bins();
    if s < 3 {
        return Err(Error::Range("nearest-neighbour overlap needs at least 3 bins".into()));
    }
    if overlaps.num_modes() < s {
        return Err(Error::Range(format!(
            "need one mode per bin ({s}), have {}",
            overlaps.num_modes()
        )));
    }
    let mut vals: Vec<f64> = (1..s - 1).map(|k| overlaps.get(k + 1, k)).collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    let n = vals.len();
    Ok(if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    })
}

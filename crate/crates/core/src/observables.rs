//! Spatial photon density and transport figures of merit.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemState, Trajectory};
use crate::eigenmodes::ModeSet;
use crate::error::{Error, Result};

/// Default wavefront quantile: 99% of the light lies right of the front.
pub const DEFAULT_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub positions: Vec<f64>,
    pub density: Vec<f64>,
    pub total: f64,
}

impl DensityProfile {
    pub fn new(positions: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if positions.len() != density.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions for {} density values",
                positions.len(),
                density.len()
            )));
        }
        let total = density.iter().sum();
        Ok(Self {
            positions,
            density,
            total,
        })
    }

    /// `I'(x) = I(x) / 𝓘`.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        self.require_light()?;
        Ok(self.density.iter().map(|v| v / self.total).collect())
    }

    fn require_light(&self) -> Result<()> {
        if self.total > 0.0 {
            Ok(())
        } else {
            Err(Error::EmptyProfile)
        }
    }
}

/// `I(x_i) = Σ_k |Ψ_k(x_i)|² n_k`.
pub fn photon_density(state: &SystemState, modes: &ModeSet) -> Result<DensityProfile> {
    if state.n.len() != modes.num_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} photon numbers for {} modes",
            state.n.len(),
            modes.num_modes()
        )));
    }
    let mut density = vec![0.0; modes.positions.len()];
    for (g, &n) in modes.intensities.iter().zip(&state.n) {
        if n == 0.0 {
            continue;
        }
        for (d, gi) in density.iter_mut().zip(g) {
            *d += gi * n;
        }
    }
    DensityProfile::new(modes.positions.clone(), density)
}

pub fn center_of_mass(p: &DensityProfile) -> Result<f64> {
    p.require_light()?;
    let s: f64 = p.positions.iter().zip(&p.density).map(|(x, i)| x * i).sum();
    Ok(s / p.total)
}

pub fn width(p: &DensityProfile) -> Result<f64> {
    let xm = center_of_mass(p)?;
    let s: f64 = p
        .positions
        .iter()
        .zip(&p.density)
        .map(|(x, i)| i * (x - xm).powi(2))
        .sum();
    Ok((s / p.total).sqrt())
}

/// Largest grid position whose strictly-right intensity is at least
/// `quantile·𝓘`. Returns the left wall `0` when no grid point qualifies.
pub fn wavefront(p: &DensityProfile, quantile: f64) -> Result<f64> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Range(format!("quantile must lie in (0, 1), got {quantile}")));
    }
    p.require_light()?;
    let target = quantile * p.total;
    // suffix sums avoid cancellation in `total - prefix`
    let mut right = 0.0;
    for i in (0..p.density.len()).rev() {
        if right >= target {
            return Ok(p.positions[i]);
        }
        right += p.density[i];
    }
    Ok(0.0)
}

/// Left and right quantile edges enclosing `1 - 2·tail` of the light, for
/// fronts without a preferred direction.
pub fn quantile_edges(p: &DensityProfile, tail: f64) -> Result<(f64, f64)> {
    if !(tail > 0.0 && tail < 0.5) {
        return Err(Error::Range(format!("tail must lie in (0, 0.5), got {tail}")));
    }
    let left = wavefront(p, 1.0 - tail)?;
    let mirrored = DensityProfile {
        positions: p.positions.iter().rev().map(|x| -x).collect(),
        density: p.density.iter().rev().copied().collect(),
        total: p.total,
    };
    let right = -wavefront(&mirrored, 1.0 - tail)?;
    Ok((left, right))
}

/// `v_wf = |x_wf(T) - x_c| / T`.
pub fn wavefront_speed(x_wf: f64, x_c: f64, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::Range("speed horizon must be positive".into()));
    }
    Ok((x_wf - x_c).abs() / horizon)
}

/// Excitation fractions `f(x_j) = m_j / M`.
pub fn excitation_fraction(state: &SystemState, molecules: f64) -> Vec<f64> {
    state.m.iter().map(|m| m / molecules).collect()
}

/// One sweep point for [`residual_speed`] and [`max_speed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub eta: f64,
    pub v_wf: f64,
}

/// `v_res`: the wavefront speed at the smallest `η` of the sweep.
pub fn residual_speed(samples: &[SpeedSample]) -> Option<f64> {
    samples
        .iter()
        .filter(|s| s.v_wf.is_finite())
        .min_by(|a, b| a.eta.total_cmp(&b.eta))
        .map(|s| s.v_wf)
}

pub fn max_speed(samples: &[SpeedSample]) -> Option<f64> {
    samples
        .iter()
        .map(|s| s.v_wf)
        .filter(|v| v.is_finite())
        .max_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportPoint {
    pub t: f64,
    pub x_m: f64,
    pub sigma_m: f64,
    pub x_wf: f64,
}

/// Time series of transport observables plus the speed at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSummary {
    pub series: Vec<TransportPoint>,
    pub x_c: f64,
    pub horizon: f64,
    pub v_wf: f64,
    /// Excitation fractions at the horizon.
    pub excitation: Vec<f64>,
}

impl TransportSummary {
    /// Observables of every sample with light in it. The horizon is the
    /// time of the last sample.
    pub fn from_trajectory(
        traj: &Trajectory,
        modes: &ModeSet,
        x_c: f64,
        molecules: f64,
        quantile: f64,
    ) -> Result<Self> {
        Self::with_horizon(traj, modes, x_c, molecules, quantile, traj.last().t)
    }

    /// As [`TransportSummary::from_trajectory`], with the speed and the
    /// excitation fractions taken at the sample at `horizon`.
    pub fn with_horizon(
        traj: &Trajectory,
        modes: &ModeSet,
        x_c: f64,
        molecules: f64,
        quantile: f64,
        horizon: f64,
    ) -> Result<Self> {
        let mut series = Vec::new();
        for s in &traj.states {
            let p = photon_density(s, modes)?;
            if p.total <= 0.0 {
                continue;
            }
            series.push(TransportPoint {
                t: s.t,
                x_m: center_of_mass(&p)?,
                sigma_m: width(&p)?,
                x_wf: wavefront(&p, quantile)?,
            });
        }
        let at = |t: f64| (t - horizon).abs() <= 1e-12 * horizon.abs().max(1.0);
        let state = traj
            .states
            .iter()
            .find(|s| at(s.t))
            .ok_or_else(|| Error::Range(format!("no sample at the horizon t = {horizon}")))?;
        let v_wf = match series.iter().find(|pt| at(pt.t)) {
            Some(pt) if horizon > 0.0 => wavefront_speed(pt.x_wf, x_c, horizon)?,
            _ => 0.0,
        };
        Ok(Self {
            series,
            x_c,
            horizon,
            v_wf,
            excitation: excitation_fraction(state, molecules),
        })
    }

    /// CSV with columns `t, x_m, sigma_m, x_wf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x_m,sigma_m,x_wf")?;
        for p in &self.series {
            writeln!(w, "{},{},{},{}", p.t, p.x_m, p.sigma_m, p.x_wf)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 + 1.0) / (n as f64 + 1.0)).collect()
    }

    fn profile(density: Vec<f64>) -> DensityProfile {
        DensityProfile::new(grid(density.len()), density).unwrap()
    }

    #[test]
    fn empty_profile_errors() {
        let p = profile(vec![0.0; 10]);
        assert_eq!(center_of_mass(&p), Err(Error::EmptyProfile));
        assert_eq!(width(&p), Err(Error::EmptyProfile));
        assert_eq!(wavefront(&p, 0.99), Err(Error::EmptyProfile));
    }

    #[test]
    fn delta_profile() {
        let mut d = vec![0.0; 50];
        d[20] = 3.0;
        let p = profile(d);
        assert!((center_of_mass(&p).unwrap() - p.positions[20]).abs() < 1e-15);
        assert!(width(&p).unwrap() < 1e-15);
        assert_eq!(wavefront(&p, 0.99).unwrap(), p.positions[19]);
    }

    #[test]
    fn two_point_variance() {
        let mut d = vec![0.0; 99];
        d[29] = 1.0;
        d[69] = 1.0;
        let p = profile(d);
        assert!((center_of_mass(&p).unwrap() - 0.5).abs() < 1e-15);
        assert!((width(&p).unwrap() - 0.2).abs() < 1e-14);
    }

    #[test]
    fn uniform_profile_moments_and_front() {
        let n = 4095;
        let p = profile(vec![1.0; n]);
        let h = 1.0 / (n as f64 + 1.0);
        assert!((width(&p).unwrap() - 1.0 / 12f64.sqrt()).abs() < h);
        assert!((wavefront(&p, 0.99).unwrap() - 0.01).abs() <= h);
        let (l, r) = quantile_edges(&p, 0.005).unwrap();
        assert!((l - 0.005).abs() <= h && (r - 0.995).abs() <= h);
    }

    #[test]
    fn speed_definition() {
        assert_eq!(wavefront_speed(0.5, 0.5, 10.0).unwrap(), 0.0);
        assert!((wavefront_speed(0.45, 0.5, 10.0).unwrap() - 0.005).abs() < 1e-15);
        assert!(wavefront_speed(0.45, 0.5, 0.0).is_err());
    }

    #[test]
    fn residual_and_max_speed() {
        let s = [
            SpeedSample { eta: 1.0, v_wf: 3.0 },
            SpeedSample { eta: 1e-3, v_wf: 0.5 },
            SpeedSample { eta: 10.0, v_wf: 4.0 },
        ];
        assert_eq!(residual_speed(&s), Some(0.5));
        assert_eq!(max_speed(&s), Some(4.0));
        assert_eq!(residual_speed(&[]), None);
    }

    proptest! {
        #[test]
        fn moments_are_scale_free(d in prop::collection::vec(0.0f64..1.0, 64), c in 1e-6f64..1e6) {
            prop_assume!(d.iter().sum::<f64>() > 1e-3);
            let p = profile(d.clone());
            let q = profile(d.iter().map(|v| v * c).collect());
            let (a, b) = (center_of_mass(&p).unwrap(), center_of_mass(&q).unwrap());
            prop_assert!((a - b).abs() <= 1e-12);
            let (a, b) = (width(&p).unwrap(), width(&q).unwrap());
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn front_moves_left_with_quantile(d in prop::collection::vec(0.0f64..1.0, 64), q1 in 0.01f64..0.98, dq in 0.001f64..0.01) {
            prop_assume!(d.iter().sum::<f64>() > 1e-3);
            let p = profile(d);
            let q2 = (q1 + dq).min(0.999);
            prop_assert!(wavefront(&p, q1).unwrap() >= wavefront(&p, q2).unwrap());
        }

        #[test]
        fn normalized_density_sums_to_one(d in prop::collection::vec(0.0f64..1.0, 1..200)) {
            prop_assume!(d.iter().sum::<f64>() > 0.0);
            let s: f64 = profile(d).normalized().unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

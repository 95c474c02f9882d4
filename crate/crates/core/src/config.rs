//! Declarative run configuration and the scenario it describes.
//!
//! Units: lengths in trap widths `D`, energies in `ω_ZPL`, rates and times
//! in units of the reference cavity loss.

use serde::{Deserialize, Serialize};

use crate::dynamics::{gaussian_pump, RateEquations, SimConfig};
use crate::eigenmodes::{mode_overlaps, solve_modes, BinLayout, ModeOptions, ModeSet, OverlapMatrix, DEFAULT_MASS_SCALE};
use crate::error::{Error, Result};
use crate::lattice::{build_biased_potential, build_disordered_potential, LatticeSpec, PotentialProfile};
use crate::observables::DEFAULT_QUANTILE;
use crate::spectral::{thermalization_coefficient, EmissionProfile, ModeRates, SpectralModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub modes: ModesConfig,
    pub spectral: SpectralConfig,
    pub dynamics: DynamicsConfig,
    pub observables: ObservablesConfig,
    pub effective: EffectiveConfig,
    pub ensemble: EnsembleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub num_wells: usize,
    pub well_width: f64,
    /// Edge-to-edge gap between wells.
    pub well_spacing: f64,
    pub total_width: f64,
    pub base_depth: f64,
    pub grid_points: usize,
    /// Depth step `ΔV` between neighbouring wells, deepest on the left.
    pub bias_step: f64,
    /// Disorder degree `d` as a fraction of `base_depth`; used when nonzero.
    pub disorder: f64,
    pub seed: u64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        let s = LatticeSpec::default();
        Self {
            num_wells: s.num_wells,
            well_width: s.well_width,
            well_spacing: s.well_spacing,
            total_width: s.total_width,
            base_depth: s.base_depth,
            grid_points: s.grid_points,
            bias_step: 0.01,
            disorder: 0.0,
            seed: 0,
        }
    }
}

impl LatticeConfig {
    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec {
            num_wells: self.num_wells,
            well_width: self.well_width,
            well_spacing: self.well_spacing,
            total_width: self.total_width,
            base_depth: self.base_depth,
            grid_points: self.grid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesConfig {
    pub num_modes: usize,
    pub mass_scale: f64,
    pub energy_margin: f64,
    pub bins: BinLayout,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self {
            num_modes: 11,
            mass_scale: DEFAULT_MASS_SCALE,
            energy_margin: 0.0,
            bins: BinLayout::PerWell,
        }
    }
}

impl ModesConfig {
    pub fn options(&self) -> ModeOptions {
        ModeOptions {
            num_modes: self.num_modes,
            mass_scale: self.mass_scale,
            energy_margin: self.energy_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub omega_zpl: f64,
    pub beta: f64,
    /// Emission rate per molecule, `E_0`.
    pub emission_rate_0: f64,
    /// Cutoff detuning `δ_0 = ω_ZPL - ω_0`; ignored when `eta` is set.
    pub cutoff_detuning: f64,
    /// Target thermalization coefficient; fixes `δ_0` (or `κ`, see `eta_via`).
    pub eta: Option<f64>,
    pub eta_via: EtaControl,
    pub emission_profile: EmissionProfile,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            omega_zpl: 1.0,
            beta: 40.0,
            emission_rate_0: 1e-2,
            cutoff_detuning: 0.2,
            eta: None,
            eta_via: EtaControl::Detuning,
            emission_profile: EmissionProfile::Flat,
        }
    }
}

/// Which parameter realizes a requested `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaControl {
    /// Move the cavity cutoff at fixed `κ`.
    Detuning,
    /// Scale the cavity loss at fixed cutoff.
    Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub kappa: f64,
    pub gamma_down: f64,
    pub molecules: f64,
    /// Peak pump rate `p`.
    pub pump_rate: f64,
    /// Pump spot width; defaults to the well width.
    pub pump_width: Option<f64>,
    /// Pump spot centre; defaults to the trap centre.
    pub pump_center: Option<f64>,
    pub t_final: f64,
    /// Number of evenly spaced samples recorded on `(0, t_final]`.
    pub samples: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub steady_tol: f64,
    pub t_max: f64,
    pub condense_threshold: f64,
    pub max_steps: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let s = SimConfig::new(Vec::new());
        Self {
            kappa: 1.0,
            gamma_down: 1e-2,
            molecules: s.molecules,
            pump_rate: 0.03,
            pump_width: None,
            pump_center: None,
            t_final: 20.0,
            samples: 200,
            abs_tol: s.abs_tol,
            rel_tol: s.rel_tol,
            steady_tol: s.steady_tol,
            t_max: s.t_max,
            condense_threshold: s.condense_threshold,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesConfig {
    pub quantile: f64,
    /// Horizon `T` of the wavefront speed; `t_final` when unset.
    pub horizon: Option<f64>,
    /// Number of density snapshots written by `evolve`.
    pub frames: usize,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            quantile: DEFAULT_QUANTILE,
            horizon: Some(4.0),
            frames: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveConfig {
    /// Condensed photon number; measured from the simulation when unset.
    pub n_s: Option<f64>,
    /// Nearest-neighbour overlap; measured from the modes when unset.
    pub nn_overlap: Option<f64>,
    /// Additional overlaps for which boundaries are reported.
    pub overlap_family: Vec<f64>,
    /// Condensed sites required to call a point conductive.
    pub min_sites: usize,
}

impl Default for EffectiveConfig {
    fn default() -> Self {
        Self {
            n_s: None,
            nn_overlap: None,
            overlap_family: vec![0.01, 0.1, 0.33],
            min_sites: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub etas: Vec<f64>,
    pub pumps: Vec<f64>,
    pub well_widths: Vec<f64>,
    /// Disorder degrees `d / V_0`.
    pub disorder: Vec<f64>,
    pub disorder_etas: Vec<f64>,
    pub realizations: usize,
    pub seed_base: u64,
    pub confidence: f64,
    /// Fraction of failed realizations above which a point fails.
    pub max_failure_fraction: f64,
    /// Relative excess of `v_wf - v_res` over `v_max` that marks a point conductive.
    pub conductive_fraction: f64,
    /// Worker threads; `0` uses every core.
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            etas: log_grid(-3.0, 1.5, 10),
            pumps: vec![0.005, 0.01, 0.02, 0.03, 0.05, 0.1],
            well_widths: vec![0.004, 0.0045, 0.005, 0.006],
            disorder: vec![1e-4, 1e-3, 1e-2, 2e-2, 5e-2],
            disorder_etas: vec![0.3, 1.0, 3.0],
            realizations: 200,
            seed_base: 1000,
            confidence: 0.99,
            max_failure_fraction: 0.05,
            conductive_fraction: 0.1,
            workers: 0,
        }
    }
}

/// `count` points evenly spaced in `log10` from `10^lo` to `10^hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.lattice.spec().validate()?;
        if !(self.lattice.disorder >= 0.0) {
            return Err(Error::Config("lattice.disorder must be non-negative".into()));
        }
        if self.lattice.disorder > 0.0 && self.lattice.bias_step != 0.0 {
            return Err(Error::Config("disordered lattices must be unbiased (bias_step = 0)".into()));
        }
        if self.modes.num_modes == 0 {
            return Err(Error::Config("modes.num_modes must be positive".into()));
        }
        if !(self.modes.mass_scale > 0.0) {
            return Err(Error::Config("modes.mass_scale must be positive".into()));
        }
        self.spectral_model_unchecked().validate()?;
        if let Some(eta) = self.spectral.eta {
            if !(eta > 0.0) {
                return Err(Error::Config("spectral.eta must be positive".into()));
            }
            if self.spectral.eta_via == EtaControl::Detuning
                && !matches!(self.spectral.emission_profile, EmissionProfile::Flat)
            {
                return Err(Error::Config("spectral.eta via detuning needs a flat emission profile".into()));
            }
        }
        let d = &self.dynamics;
        if !(d.t_final > 0.0) {
            return Err(Error::Config("dynamics.t_final must be positive".into()));
        }
        if !(d.pump_rate >= 0.0) {
            return Err(Error::Config("dynamics.pump_rate must be non-negative".into()));
        }
        if let Some(w) = d.pump_width {
            if !(w > 0.0) {
                return Err(Error::Config("dynamics.pump_width must be positive".into()));
            }
        }
        if d.samples == 0 {
            return Err(Error::Config("dynamics.samples must be positive".into()));
        }
        let q = self.observables.quantile;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config("observables.quantile must lie in (0, 1)".into()));
        }
        if let Some(t) = self.observables.horizon {
            if !(t > 0.0 && t <= d.t_final) {
                return Err(Error::Config("observables.horizon must lie in (0, t_final]".into()));
            }
        }
        if let Some(g) = self.effective.nn_overlap {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config("effective.nn_overlap must lie in [0, 1]".into()));
            }
        }
        let e = &self.ensemble;
        if e.realizations < 2 {
            return Err(Error::Config("ensemble.realizations must be at least 2".into()));
        }
        if !(e.confidence > 0.0 && e.confidence < 1.0) {
            return Err(Error::Config("ensemble.confidence must lie in (0, 1)".into()));
        }
        if e.etas.iter().chain(&e.disorder_etas).chain(&e.pumps).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("ensemble grids must hold positive values".into()));
        }
        if e.disorder.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("ensemble.disorder must be non-negative".into()));
        }
        Ok(())
    }

    fn spectral_model_unchecked(&self) -> SpectralModel {
        let s = &self.spectral;
        SpectralModel {
            omega_zpl: s.omega_zpl,
            beta: s.beta,
            emission_rate_0: s.emission_rate_0,
            cavity_cutoff: s.omega_zpl - s.cutoff_detuning,
            emission_profile: s.emission_profile,
        }
    }

    /// Spectral model and cavity loss realizing the configured `η`.
    pub fn spectral_and_kappa(&self) -> (SpectralModel, f64) {
        let base = self.spectral_model_unchecked();
        let kappa = self.dynamics.kappa;
        let m = self.dynamics.molecules;
        match (self.spectral.eta, self.spectral.eta_via) {
            (None, _) => (base, kappa),
            (Some(eta), EtaControl::Detuning) => {
                let d0 = base.cutoff_detuning_for_eta(eta, m, kappa);
                (base.with_cutoff_detuning(d0), kappa)
            }
            (Some(eta), EtaControl::Kappa) => {
                let a0 = base.rates_for_mode(base.cavity_cutoff).absorption;
                (base, a0 * m / eta)
            }
        }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        let mut c = self.clone();
        c.spectral.eta = Some(eta);
        c
    }

    pub fn horizon(&self) -> f64 {
        self.observables.horizon.unwrap_or(self.dynamics.t_final)
    }
}

/// Everything needed to integrate one configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub profile: PotentialProfile,
    pub modes: ModeSet,
    pub overlaps: OverlapMatrix,
    pub spectral: SpectralModel,
    pub rates: Vec<ModeRates>,
    pub sim: SimConfig,
    pub eta: f64,
    pub pump_center: f64,
}

impl Scenario {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.lattice.spec();
        let profile = if cfg.lattice.disorder > 0.0 {
            build_disordered_potential(&spec, cfg.lattice.disorder * spec.base_depth, cfg.lattice.seed)?
        } else {
            build_biased_potential(&spec, cfg.lattice.bias_step)?
        };
        Self::from_profile(cfg, profile)
    }

    pub fn from_profile(cfg: &RunConfig, profile: PotentialProfile) -> Result<Self> {
        let modes = solve_modes(&profile, &cfg.modes.options())?;
        Self::from_modes(cfg, profile, modes)
    }

    /// Reuse an already solved mode set (the modes do not depend on `η` or the pump).
    pub fn from_modes(cfg: &RunConfig, profile: PotentialProfile, modes: ModeSet) -> Result<Self> {
        let overlaps = mode_overlaps(&modes, &profile, &cfg.modes.bins)?;
        let (spectral, kappa) = cfg.spectral_and_kappa();
        let rates = spectral.mode_rates(&modes);
        let d = &cfg.dynamics;
        let pump_center = d.pump_center.unwrap_or_else(|| profile.spec.trap_center());
        let pump_width = d.pump_width.unwrap_or(profile.spec.well_width);
        let pump = gaussian_pump(&overlaps.bin_centers(), pump_center, pump_width, d.pump_rate);
        let sim = SimConfig {
            kappa,
            gamma_down: d.gamma_down,
            pump,
            molecules: d.molecules,
            t_final: d.t_final,
            abs_tol: d.abs_tol,
            rel_tol: d.rel_tol,
            steady_tol: d.steady_tol,
            t_max: d.t_max,
            condense_threshold: d.condense_threshold,
            max_steps: d.max_steps,
        };
        sim.validate()?;
        let eta = thermalization_coefficient(rates[0].absorption, d.molecules, kappa);
        Ok(Self {
            profile,
            modes,
            overlaps,
            spectral,
            rates,
            sim,
            eta,
            pump_center,
        })
    }

    pub fn equations(&self) -> Result<RateEquations> {
        RateEquations::new(&self.overlaps, &self.rates, &self.sim)
    }

    /// Bin holding the pump centre.
    pub fn pumped_bin(&self) -> usize {
        let edges = &self.overlaps.bin_edges;
        let j = edges.partition_point(|&e| e <= self.pump_center);
        j.saturating_sub(1).min(self.overlaps.num_bins() - 1)
    }

    /// Mode with the largest weight in `bin`.
    pub fn mode_of_bin(&self, bin: usize) -> usize {
        (0..self.overlaps.num_modes())
            .max_by(|&a, &b| self.overlaps.get(a, bin).total_cmp(&self.overlaps.get(b, bin)))
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn eta_via_detuning_and_kappa() {
        for via in [EtaControl::Detuning, EtaControl::Kappa] {
            let mut cfg = RunConfig::default().with_eta(2.5);
            cfg.spectral.eta_via = via;
            let scn = Scenario::build(&cfg).unwrap();
            assert!((scn.eta - 2.5).abs() < 1e-12, "{via:?}: {}", scn.eta);
        }
    }

    #[test]
    fn disorder_requires_zero_bias() {
        let mut cfg = RunConfig::default();
        cfg.lattice.disorder = 1e-2;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.lattice.bias_step = 0.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn pump_peaks_at_centre_bin() {
        let scn = Scenario::build(&RunConfig::default()).unwrap();
        let j = scn.pumped_bin();
        assert_eq!(j, 5);
        let peak = scn.sim.pump.iter().cloned().fold(0.0, f64::max);
        assert_eq!(scn.sim.pump[j], peak);
        assert_eq!(scn.mode_of_bin(j), 5);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(-2.0, 1.0, 4);
        assert_eq!(g.len(), 4);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[3] - 10.0).abs() < 1e-12);
    }
}

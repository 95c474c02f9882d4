//! Dye absorption and emission rates per cavity mode.
//!
//! Absorption follows the Kennard–Stepanov relation `A_k = E_k exp(-β δ_k)`
//! with detuning `δ_k = ω_ZPL - ω_k`. Energies are in units of `ω_ZPL`,
//! rates in units of the cavity loss `κ`.

use serde::{Deserialize, Serialize};

use crate::eigenmodes::ModeSet;
use crate::error::{Error, Result};

/// Exponents `-β δ` above this are clamped.
pub const MAX_EXPONENT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EmissionProfile {
    /// `E_k = E_0` for every mode.
    Flat,
    /// `E_k = E_0 exp(-(δ_k - center)² / (2 width²))`.
    Gaussian { center: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralModel {
    pub omega_zpl: f64,
    /// Inverse temperature in units of `1/ω_ZPL`.
    pub beta: f64,
    /// Emission rate `E_0`.
    pub emission_rate_0: f64,
    /// Cavity cutoff `ω_0`; the lowest mode is pinned here.
    pub cavity_cutoff: f64,
    pub emission_profile: EmissionProfile,
}

impl Default for SpectralModel {
    fn default() -> Self {
        Self {
            omega_zpl: 1.0,
            beta: 40.0,
            emission_rate_0: 3.0e-5,
            cavity_cutoff: 1.0 - 0.034,
            emission_profile: EmissionProfile::Flat,
        }
    }
}

/// Per-mode rates; `clamped` flags modes whose exponent hit [`MAX_EXPONENT`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRates {
    pub absorption: f64,
    pub emission: f64,
    pub clamped: bool,
}

impl SpectralModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Range(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.emission_rate_0 > 0.0) {
            return Err(Error::Range(format!(
                "emission_rate_0 must be positive, got {}",
                self.emission_rate_0
            )));
        }
        if let EmissionProfile::Gaussian { width, .. } = self.emission_profile {
            if !(width > 0.0) {
                return Err(Error::Range("gaussian emission width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Cutoff detuning `δ_0 = ω_ZPL - ω_0`.
    pub fn cutoff_detuning(&self) -> f64 {
        self.omega_zpl - self.cavity_cutoff
    }

    pub fn with_cutoff_detuning(mut self, delta0: f64) -> Self {
        self.cavity_cutoff = self.omega_zpl - delta0;
        self
    }

    pub fn detuning(&self, omega_k: f64) -> f64 {
        self.omega_zpl - omega_k
    }

    pub fn emission_rate(&self, delta: f64) -> f64 {
        match self.emission_profile {
            EmissionProfile::Flat => self.emission_rate_0,
            EmissionProfile::Gaussian { center, width } => {
                self.emission_rate_0 * (-(delta - center).powi(2) / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn rates_for_mode(&self, omega_k: f64) -> ModeRates {
        let delta = self.detuning(omega_k);
        let emission = self.emission_rate(delta);
        let mut exponent = -self.beta * delta;
        let clamped = exponent > MAX_EXPONENT;
        if clamped {
            log::warn!("beta*delta = {} below -{MAX_EXPONENT}; clamping", -exponent);
            exponent = MAX_EXPONENT;
        }
        ModeRates {
            absorption: emission * exponent.exp(),
            emission,
            clamped,
        }
    }

    /// `ν = 1 + exp(β δ)`, the inverse clamped excitation fraction.
    pub fn nu(&self, delta: f64) -> f64 {
        1.0 + (self.beta * delta).exp()
    }

    /// Cavity frequencies of a mode set: the lowest mode sits at the cutoff
    /// and the others keep their Schrödinger spacing.
    pub fn cavity_energies(&self, modes: &ModeSet) -> Vec<f64> {
        let ground = modes.energies[0];
        modes
            .energies
            .iter()
            .map(|e| self.cavity_cutoff + (e - ground))
            .collect()
    }

    pub fn mode_rates(&self, modes: &ModeSet) -> Vec<ModeRates> {
        self.cavity_energies(modes)
            .into_iter()
            .map(|w| self.rates_for_mode(w))
            .collect()
    }

    /// Cutoff detuning that gives thermalization coefficient `eta` for the
    /// lowest mode (flat emission profile).
    pub fn cutoff_detuning_for_eta(&self, eta: f64, molecules: f64, kappa: f64) -> f64 {
        (self.emission_rate_0 * molecules / (kappa * eta)).ln() / self.beta
    }
}

/// `η = A_0 M / κ`.
pub fn thermalization_coefficient(absorption_0: f64, molecules: f64, kappa: f64) -> f64 {
    absorption_0 * molecules / kappa
}

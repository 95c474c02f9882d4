//! Effective transport model: light advances one site each time the next
//! site's molecules are driven to their gain-clamp level by the condensed
//! neighbour.
//!
//! Sites are indexed left to right. The cascade starts at the pumped site
//! `k_c` and proceeds leftwards, so site `k` condenses after site `k + 1`:
//!
//! ```text
//! t_k = log(1 / (1 - ν_{k+1}/ν_k)) / (𝓖_{k+1} ν_{k+1}),   𝓖_{k+1} = A_{k+1} g n_s
//! t'  = log(1 / (1 - γ/ν_{k_c})) / p,                      γ = p / (p + Γ↓ + E_{k_c})
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    /// Nearest-neighbour overlap `g_{k+1,k}`.
    pub nn_overlap: f64,
    /// Photon number of a condensed mode, `n_s`.
    pub n_s: f64,
    /// `β δ_k` per site.
    pub beta_delta: Vec<f64>,
    /// Absorption rate `A_k` per site.
    pub absorption: Vec<f64>,
    pub pumped_site: usize,
    /// Pump rate at the pumped site, `p`.
    pub pump: f64,
    pub gamma_down: f64,
    /// Emission rate of the pumped site's mode, `E_{k_c}`.
    pub emission_pumped: f64,
    /// Molecules per site, `N_k`.
    pub molecules: f64,
    /// Distance between neighbouring sites.
    pub site_spacing: f64,
    /// Evaluation horizon `T`.
    pub horizon: f64,
}

impl EffectiveParams {
    /// Parameters for a lattice whose site energies (cavity frequencies) are
    /// `site_omegas`, with rates taken from `spectral`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_spectrum(
        spectral: &SpectralModel,
        site_omegas: &[f64],
        pumped_site: usize,
        nn_overlap: f64,
        n_s: f64,
        pump: f64,
        gamma_down: f64,
        molecules: f64,
        site_spacing: f64,
        horizon: f64,
    ) -> Result<Self> {
        if pumped_site >= site_omegas.len() {
            return Err(Error::Range(format!(
                "pumped site {pumped_site} outside {} sites",
                site_omegas.len()
            )));
        }
        let rates: Vec<_> = site_omegas.iter().map(|&w| spectral.rates_for_mode(w)).collect();
        let params = Self {
            nn_overlap,
            n_s,
            beta_delta: site_omegas.iter().map(|&w| spectral.beta * spectral.detuning(w)).collect(),
            absorption: rates.iter().map(|r| r.absorption).collect(),
            pumped_site,
            pump,
            gamma_down,
            emission_pumped: rates[pumped_site].emission,
            molecules,
            site_spacing,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nn_overlap) {
            return Err(Error::Range(format!("nn_overlap {} outside [0, 1]", self.nn_overlap)));
        }
        if !(self.n_s > 0.0) {
            return Err(Error::Range("n_s must be positive".into()));
        }
        if self.beta_delta.len() != self.absorption.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} detunings for {} absorption rates",
                self.beta_delta.len(),
                self.absorption.len()
            )));
        }
        if self.pumped_site >= self.absorption.len() {
            return Err(Error::Range("pumped site outside the lattice".into()));
        }
        if self.pump < 0.0 || self.gamma_down < 0.0 || self.emission_pumped < 0.0 {
            return Err(Error::Range("rates must be non-negative".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Range("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn nu(&self, site: usize) -> f64 {
        1.0 + self.beta_delta[site].exp()
    }

    pub fn num_sites(&self) -> usize {
        self.absorption.len()
    }

    pub fn with_overlap(&self, g: f64) -> Self {
        Self {
            nn_overlap: g,
            ..self.clone()
        }
    }
}

/// Time for site `site` to condense once site `site + 1` has.
pub fn condensation_time(params: &EffectiveParams, site: usize) -> Result<f64> {
    let next = site + 1;
    if next >= params.num_sites() {
        return Err(Error::Range(format!("site {site} has no right neighbour")));
    }
    let nu_site = params.nu(site);
    let nu_next = params.nu(next);
    if nu_next >= nu_site {
        return Err(Error::TransportBlocked {
            site: next,
            next: site,
            nu_site: nu_next,
            nu_next: nu_site,
        });
    }
    let gain = params.absorption[next] * params.nn_overlap * params.n_s;
    Ok(-(-nu_next / nu_site).ln_1p() / (gain * nu_next))
}

/// Time to gain-clamp the molecules at the pumped site.
pub fn pump_clamp_time(params: &EffectiveParams) -> Result<f64> {
    let p = params.pump;
    if p <= 0.0 {
        return Err(Error::ZeroPump);
    }
    let gamma = p / (p + params.gamma_down + params.emission_pumped);
    Ok(-(-gamma / params.nu(params.pumped_site)).ln_1p() / p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpeed {
    /// Sites condensed leftwards of the pump within the horizon, `L(T)`.
    pub condensed_sites: usize,
    pub v_mod: f64,
    pub t_clamp: f64,
    /// `t_k` of each successive site, stopping at the first blocked one.
    pub site_times: Vec<f64>,
    pub blocked: bool,
}

/// `v_mod = L(T) Δd / T`.
pub fn model_speed(params: &EffectiveParams) -> Result<ModelSpeed> {
    params.validate()?;
    let t_clamp = pump_clamp_time(params)?;
    let mut elapsed = t_clamp;
    let mut site_times = Vec::new();
    let mut condensed = 0;
    let mut blocked = false;
    for site in (0..params.pumped_site).rev() {
        match condensation_time(params, site) {
            Ok(t) => {
                site_times.push(t);
                elapsed += t;
                if elapsed <= params.horizon {
                    condensed += 1;
                }
            }
            Err(Error::TransportBlocked { .. }) => {
                blocked = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ModelSpeed {
        condensed_sites: condensed,
        v_mod: condensed as f64 * params.site_spacing / params.horizon,
        t_clamp,
        site_times,
        blocked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub pump: f64,
    /// Smallest `η` of the grid that is conductive; `None` if none is.
    pub eta_critical: Option<f64>,
}

/// For every pump rate, the smallest `η` whose model speed reaches
/// `min_sites` condensed sites. `make` builds the parameters of one grid point.
pub fn phase_boundary<F>(etas: &[f64], pumps: &[f64], min_sites: usize, mut make: F) -> Result<Vec<BoundaryPoint>>
where
    F: FnMut(f64, f64) -> Result<EffectiveParams>,
{
    let mut sorted = etas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(pumps.len());
    for &p in pumps {
        let mut critical = None;
        for &eta in &sorted {
            let speed = match model_speed(&make(eta, p)?) {
                Ok(s) => s,
                Err(Error::ZeroPump) => break,
                Err(e) => return Err(e),
            };
            if speed.condensed_sites >= min_sites {
                critical = Some(eta);
                break;
            }
        }
        out.push(BoundaryPoint {
            pump: p,
            eta_critical: critical,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(nu_ratio_bias: f64) -> EffectiveParams {
        let n = 7;
        EffectiveParams {
            nn_overlap: 0.1,
            n_s: 5e4,
            beta_delta: (0..n).map(|k| 4.0 - nu_ratio_bias * k as f64).collect(),
            absorption: (0..n).map(|k| 1e-6 * (nu_ratio_bias * k as f64).exp()).collect(),
            pumped_site: 5,
            pump: 0.05,
            gamma_down: 1e-2,
            emission_pumped: 1e-3,
            molecules: 1e6,
            site_spacing: 0.006,
            horizon: 1e3,
        }
    }

    #[test]
    fn blocked_exactly_when_nu_does_not_fall() {
        let mut p = params(0.4);
        p.beta_delta[2] = p.beta_delta[1];
        assert!(matches!(condensation_time(&p, 1), Err(Error::TransportBlocked { site: 2, next: 1, .. })));
        p.beta_delta[2] = p.beta_delta[1] + 1e-9;
        assert!(matches!(condensation_time(&p, 1), Err(Error::TransportBlocked { .. })));
        p.beta_delta[2] = p.beta_delta[1] - 1e-9;
        assert!(condensation_time(&p, 1).unwrap().is_finite());
    }

    #[test]
    fn limits_of_condensation_time() {
        let mut p = params(0.4);
        p.beta_delta[3] = 60.0;
        assert!(condensation_time(&p, 3).unwrap() < 1e-20);
        let p = params(0.4);
        let regular = condensation_time(&p, 3).unwrap();
        let mut q = p.clone();
        q.beta_delta[4] = q.beta_delta[3] - 1e-12;
        let mut last = regular;
        for eps in [1e-3, 1e-6, 1e-9, 1e-12] {
            q.beta_delta[4] = q.beta_delta[3] - eps;
            let t = condensation_time(&q, 3).unwrap();
            assert!(t > last);
            last = t;
        }
        assert!(last > 10.0 * regular);
    }

    #[test]
    fn zero_pump_is_an_error() {
        let mut p = params(0.4);
        p.pump = 0.0;
        assert_eq!(pump_clamp_time(&p), Err(Error::ZeroPump));
    }

    #[test]
    fn strong_pump_floor() {
        let mut p = params(0.4);
        p.pump = 1e9;
        let nu = p.nu(p.pumped_site);
        let floor = -(-1.0 / nu).ln_1p() / p.pump;
        assert!((pump_clamp_time(&p).unwrap() - floor).abs() <= 1e-6 * floor);
    }

    #[test]
    fn short_horizon_gives_no_sites() {
        let mut p = params(0.4);
        p.horizon = 0.5 * pump_clamp_time(&p).unwrap();
        let s = model_speed(&p).unwrap();
        assert_eq!(s.condensed_sites, 0);
        assert_eq!(s.v_mod, 0.0);
    }

    #[test]
    fn edge_saturation() {
        let mut p = params(0.4);
        p.n_s = 1e30;
        p.pump = 1e6;
        let s = model_speed(&p).unwrap();
        assert_eq!(s.condensed_sites, p.pumped_site);
        assert!((s.v_mod - p.pumped_site as f64 * p.site_spacing / p.horizon).abs() < 1e-18);
    }

    #[test]
    fn blocked_site_truncates_cascade() {
        let mut p = params(0.4);
        p.n_s = 1e30;
        p.pump = 1e6;
        p.beta_delta[2] = p.beta_delta[3];
        let s = model_speed(&p).unwrap();
        assert!(s.blocked);
        assert_eq!(s.condensed_sites, 2);
    }

    #[test]
    fn larger_overlap_needs_less_thermalization() {
        let etas: Vec<f64> = (0..41).map(|i| 10f64.powf(-2.0 + 0.1 * i as f64)).collect();
        let pumps = [0.01, 0.03, 0.1, 0.3];
        let make = |g: f64| {
            move |eta: f64, pump: f64| {
                let mut p = params(0.4);
                let scale = eta * 1.0 / (p.molecules * p.absorption[0]);
                p.absorption.iter_mut().for_each(|a| *a *= scale);
                p.pump = pump;
                p.nn_overlap = g;
                Ok(p)
            }
        };
        let lo = phase_boundary(&etas, &pumps, 1, make(0.01)).unwrap();
        let mid = phase_boundary(&etas, &pumps, 1, make(0.1)).unwrap();
        let hi = phase_boundary(&etas, &pumps, 1, make(0.33)).unwrap();
        for i in 0..pumps.len() {
            let (a, b, c) = (lo[i].eta_critical.unwrap(), mid[i].eta_critical.unwrap(), hi[i].eta_critical.unwrap());
            assert!(c < a && c <= b && b <= a, "{a} {b} {c}");
        }
        for w in mid.windows(2) {
            assert!(w[1].eta_critical.unwrap() <= w[0].eta_critical.unwrap());
        }
    }

    #[test]
    fn threshold_zero_accepts_smallest_eta() {
        let etas = [0.5, 0.1, 2.0];
        let b = phase_boundary(&etas, &[0.1], 0, |_, _| Ok(params(0.4))).unwrap();
        assert_eq!(b[0].eta_critical, Some(0.1));
    }

    proptest! {
        #[test]
        fn faster_with_more_gain(bias in 0.05f64..2.0, f in 1.01f64..10.0, site in 0usize..5) {
            let p = params(bias);
            let t0 = condensation_time(&p, site).unwrap();
            let mut q = p.clone();
            q.absorption[site + 1] *= f;
            prop_assert!(condensation_time(&q, site).unwrap() < t0);
            let q = p.with_overlap(p.nn_overlap * f.min(9.9));
            prop_assert!(condensation_time(&q, site).unwrap() < t0);
            let mut q = p.clone();
            q.n_s *= f;
            prop_assert!(condensation_time(&q, site).unwrap() < t0);
        }
    }
}

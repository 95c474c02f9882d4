//! Parameter sweeps and disorder ensembles.
//!
//! Every grid point or realization is an independent task. Tasks run on a
//! bounded thread pool and results are merged by task index, so the output
//! does not depend on scheduling.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{RunConfig, Scenario};
use crate::dynamics::{find_steady_state, integrate, IntegrateOptions, SystemState, Trajectory};
use crate::effective::{model_speed, phase_boundary, BoundaryPoint, EffectiveParams};
use crate::eigenmodes::{nn_overlap, solve_modes, ModeSet};
use crate::error::{Error, Result};
use crate::lattice::{build_biased_potential, PotentialProfile};
use crate::observables::{
    center_of_mass, max_speed, photon_density, residual_speed, width, SpeedSample, TransportSummary,
};

/// Run `f` over `items` on at most `workers` threads (`0` = all cores),
/// returning results in input order.
pub fn run_pool<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Whether an error is a per-task numerical failure, which is recorded,
/// rather than a configuration problem, which aborts the whole run.
fn is_task_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoConvergence { .. }
            | Error::StepLimit { .. }
            | Error::StiffnessFailure { .. }
            | Error::InvariantViolation { .. }
            | Error::EmptyProfile
    )
}

/// Transport observables of one run from the vacuum up to `horizon`.
#[derive(Debug, Clone)]
pub struct TransportRun {
    pub trajectory: Trajectory,
    pub summary: TransportSummary,
}

/// Integrate `scn` from the vacuum to `t_final`, recording `samples` evenly
/// spaced states plus the horizon.
pub fn run_transport(scn: &Scenario, cfg: &RunConfig, t_final: f64, samples: usize) -> Result<TransportRun> {
    let sys = scn.equations()?;
    let horizon = cfg.horizon().min(t_final);
    let mut opts = IntegrateOptions::uniform(0.0, t_final, samples.max(1));
    if !opts.sample_times.iter().any(|&t| t == horizon) {
        opts.sample_times.push(horizon);
        opts.sample_times.sort_by(f64::total_cmp);
    }
    let init = SystemState::vacuum(scn.modes.num_modes(), scn.overlaps.num_bins());
    let trajectory = integrate(&sys, &init, &opts)?;
    let summary = TransportSummary::with_horizon(
        &trajectory,
        &scn.modes,
        scn.pump_center,
        scn.sim.molecules,
        cfg.observables.quantile,
        horizon,
    )?;
    Ok(TransportRun { trajectory, summary })
}

/// Effective-model parameters at a scenario: one site per well, sites ordered
/// by mode energy, overlap and `n_s` as given.
pub fn effective_params(scn: &Scenario, cfg: &RunConfig, nn_overlap: f64, n_s: f64) -> Result<EffectiveParams> {
    let sites = scn.overlaps.num_bins();
    let omegas = scn.spectral.cavity_energies(&scn.modes);
    if omegas.len() < sites {
        return Err(Error::Range(format!("need one mode per site ({sites}), have {}", omegas.len())));
    }
    let pumped = scn.pumped_bin();
    EffectiveParams::from_spectrum(
        &scn.spectral,
        &omegas[..sites],
        pumped,
        nn_overlap,
        n_s,
        scn.sim.pump[pumped],
        scn.sim.gamma_down,
        scn.sim.molecules,
        scn.profile.spec.pitch(),
        cfg.horizon(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub well_width: f64,
    pub pump: f64,
    pub eta: f64,
    pub cutoff_detuning: f64,
    pub kappa: f64,
    pub x_wf: f64,
    pub x_m: f64,
    pub sigma_m: f64,
    pub v_wf: f64,
    /// Largest single-mode photon number at the horizon.
    pub n_s: f64,
    pub nn_overlap: f64,
    /// Sites condensed leftwards of the pump in the effective model.
    pub model_sites: Option<usize>,
    pub v_mod: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub effective: Option<EffectiveParams>,
}

impl SweepPoint {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// An `η × p` grid for every well width, evaluated at a fixed horizon.
#[derive(Debug, Clone)]
pub struct PhaseSweep {
    pub etas: Vec<f64>,
    pub pumps: Vec<f64>,
    pub well_widths: Vec<f64>,
    pub horizon: f64,
    /// Row-major over `(well_width, pump, eta)`.
    pub points: Vec<SweepPoint>,
}

fn sorted_unique(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Mode set of the biased lattice with well width `w`.
fn biased_modes(cfg: &RunConfig, w: f64) -> Result<(PotentialProfile, ModeSet)> {
    let mut c = cfg.clone();
    c.lattice.well_width = w;
    c.lattice.disorder = 0.0;
    c.validate()?;
    let profile = build_biased_potential(&c.lattice.spec(), c.lattice.bias_step)?;
    let modes = solve_modes(&profile, &c.modes.options())?;
    Ok((profile, modes))
}

/// Configuration of one sweep grid point.
pub fn sweep_point_config(cfg: &RunConfig, well_width: f64, pump: f64, eta: f64) -> RunConfig {
    let mut c = cfg.with_eta(eta);
    c.lattice.well_width = well_width;
    c.lattice.disorder = 0.0;
    c.dynamics.pump_rate = pump;
    c
}

fn run_sweep_point(cfg: &RunConfig, profile: &PotentialProfile, modes: &ModeSet, w: f64, p: f64, eta: f64) -> Result<SweepPoint> {
    let c = sweep_point_config(cfg, w, p, eta);
    let scn = Scenario::from_modes(&c, profile.clone(), modes.clone())?;
    let horizon = c.horizon();
    let g = match c.effective.nn_overlap {
        Some(g) => g,
        None => nn_overlap(&scn.overlaps)?,
    };
    let mut pt = SweepPoint {
        well_width: w,
        pump: p,
        eta,
        cutoff_detuning: scn.spectral.cutoff_detuning(),
        kappa: scn.sim.kappa,
        x_wf: f64::NAN,
        x_m: f64::NAN,
        sigma_m: f64::NAN,
        v_wf: f64::NAN,
        n_s: f64::NAN,
        nn_overlap: g,
        model_sites: None,
        v_mod: None,
        error: None,
        effective: None,
    };
    let run = match run_transport(&scn, &c, horizon, 1) {
        Ok(r) => r,
        Err(e) if is_task_failure(&e) => {
            pt.error = Some(e.to_string());
            return Ok(pt);
        }
        Err(e) => return Err(e),
    };
    let last = run.trajectory.last();
    pt.n_s = last.n.iter().cloned().fold(0.0, f64::max);
    pt.v_wf = run.summary.v_wf;
    if let Some(s) = run.summary.series.last() {
        pt.x_wf = s.x_wf;
        pt.x_m = s.x_m;
        pt.sigma_m = s.sigma_m;
    }
    let n_s = c.effective.n_s.unwrap_or(pt.n_s);
    if n_s > 0.0 {
        let params = effective_params(&scn, &c, g, n_s)?;
        match model_speed(&params) {
            Ok(ms) => {
                pt.model_sites = Some(ms.condensed_sites);
                pt.v_mod = Some(ms.v_mod);
            }
            Err(Error::ZeroPump) => {
                pt.model_sites = Some(0);
                pt.v_mod = Some(0.0);
            }
            Err(e) => return Err(e),
        }
        pt.effective = Some(params);
    }
    Ok(pt)
}

/// Run every `(Δw, p, η)` point of the configured grids up to the horizon.
pub fn run_phase_sweep(cfg: &RunConfig) -> Result<PhaseSweep> {
    cfg.validate()?;
    let e = &cfg.ensemble;
    let etas = sorted_unique(&e.etas);
    let pumps = sorted_unique(&e.pumps);
    let widths = sorted_unique(&e.well_widths);
    if etas.is_empty() || pumps.is_empty() || widths.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let lattices = run_pool(e.workers, &widths, |&w| biased_modes(cfg, w))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut tasks = Vec::new();
    for wi in 0..widths.len() {
        for &p in &pumps {
            for &eta in &etas {
                tasks.push((wi, p, eta));
            }
        }
    }
    let points = run_pool(e.workers, &tasks, |&(wi, p, eta)| {
        let (profile, modes) = &lattices[wi];
        run_sweep_point(cfg, profile, modes, widths[wi], p, eta)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(PhaseSweep {
        etas,
        pumps,
        well_widths: widths,
        horizon: cfg.horizon(),
        points,
    })
}

/// One `(Δw, p)` row of a sweep with its residual speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub well_width: f64,
    pub pump: f64,
    pub v_res: Option<f64>,
    pub samples: Vec<SpeedSample>,
}

impl PhaseSweep {
    pub fn row(&self, well_width: f64, pump: f64) -> Vec<&SweepPoint> {
        self.points
            .iter()
            .filter(|pt| pt.well_width == well_width && pt.pump == pump)
            .collect()
    }

    pub fn rows(&self) -> Vec<SpeedRow> {
        let mut out = Vec::new();
        for &w in &self.well_widths {
            for &p in &self.pumps {
                let samples: Vec<SpeedSample> = self
                    .row(w, p)
                    .into_iter()
                    .filter(|pt| pt.ok())
                    .map(|pt| SpeedSample { eta: pt.eta, v_wf: pt.v_wf })
                    .collect();
                out.push(SpeedRow {
                    well_width: w,
                    pump: p,
                    v_res: residual_speed(&samples),
                    samples,
                });
            }
        }
        out
    }

    /// Largest wavefront speed among the points accepted by `keep`.
    pub fn v_max_where<P: Fn(&SweepPoint) -> bool>(&self, keep: P) -> Option<f64> {
        let all: Vec<SpeedSample> = self
            .points
            .iter()
            .filter(|pt| pt.ok() && keep(pt))
            .map(|pt| SpeedSample { eta: pt.eta, v_wf: pt.v_wf })
            .collect();
        max_speed(&all)
    }

    /// Largest wavefront speed of the whole sweep.
    pub fn v_max(&self) -> Option<f64> {
        self.v_max_where(|_| true)
    }

    /// `v_max` of the well-width scan at one pump rate.
    pub fn v_max_at_pump(&self, pump: f64) -> Option<f64> {
        self.v_max_where(|pt| pt.pump == pump)
    }

    /// `v_max` of the `η × p` map at one well width.
    pub fn v_max_at_width(&self, well_width: f64) -> Option<f64> {
        self.v_max_where(|pt| pt.well_width == well_width)
    }

    /// `v_wf - v_res` of a point, with `v_res` from its own row.
    pub fn effective_speed(&self, pt: &SweepPoint) -> Option<f64> {
        let samples: Vec<SpeedSample> = self
            .row(pt.well_width, pt.pump)
            .into_iter()
            .filter(|q| q.ok())
            .map(|q| SpeedSample { eta: q.eta, v_wf: q.v_wf })
            .collect();
        let v_res = residual_speed(&samples)?;
        pt.ok().then(|| pt.v_wf - v_res)
    }

    /// Per pump rate, the smallest `η` whose `v_wf - v_res` exceeds
    /// `fraction · v_max`, with `v_max` taken over the map at `well_width`.
    pub fn simulated_boundary(&self, well_width: f64, fraction: f64) -> Vec<BoundaryPoint> {
        let v_max = self.v_max_at_width(well_width).unwrap_or(0.0);
        self.pumps
            .iter()
            .map(|&p| {
                let critical = self
                    .row(well_width, p)
                    .into_iter()
                    .find(|pt| self.effective_speed(pt).is_some_and(|dv| dv > fraction * v_max))
                    .map(|pt| pt.eta);
                BoundaryPoint { pump: p, eta_critical: critical }
            })
            .collect()
    }

    /// Effective-model boundary over the sweep's own grid. Every point uses
    /// its measured `n_s`; `overlap` replaces the measured `g_{k+1,k}` when set.
    pub fn effective_boundary(&self, well_width: f64, overlap: Option<f64>, min_sites: usize) -> Result<Vec<BoundaryPoint>> {
        let lookup: HashMap<(u64, u64), &SweepPoint> = self
            .points
            .iter()
            .filter(|pt| pt.well_width == well_width)
            .map(|pt| ((pt.eta.to_bits(), pt.pump.to_bits()), pt))
            .collect();
        let mut out = Vec::new();
        for &p in &self.pumps {
            // points without a usable run cannot be conductive
            let etas: Vec<f64> = self
                .etas
                .iter()
                .copied()
                .filter(|eta| lookup.get(&(eta.to_bits(), p.to_bits())).is_some_and(|pt| pt.effective.is_some()))
                .collect();
            let b = phase_boundary(&etas, &[p], min_sites, |eta, p| {
                let pt = lookup[&(eta.to_bits(), p.to_bits())];
                let params = pt.effective.clone().expect("filtered above");
                Ok(match overlap {
                    Some(g) => params.with_overlap(g),
                    None => params,
                })
            })?;
            out.extend(b);
        }
        Ok(out)
    }
}

/// Grid index of a boundary value, `etas.len()` for "no conductive point".
pub fn boundary_index(etas: &[f64], b: &BoundaryPoint) -> usize {
    match b.eta_critical {
        Some(eta) => etas.iter().position(|&e| e == eta).unwrap_or(etas.len()),
        None => etas.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub disorder: f64,
    pub eta: f64,
    pub index: usize,
    pub seed: u64,
    pub sigma_m: f64,
    pub x_m: f64,
    pub v_wf: f64,
    /// Normalized flux imbalance of the steady state.
    pub flux_imbalance: f64,
    pub error: Option<String>,
}

impl Realization {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn key(&self) -> (u64, u64, usize) {
        (self.disorder.to_bits(), self.eta.to_bits(), self.index)
    }
}

/// Aggregate of one `(d, η)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderPoint {
    pub disorder: f64,
    pub eta: f64,
    pub mean_sigma: f64,
    pub ci_half_width: f64,
    pub mean_v_wf: f64,
    pub failures: usize,
    /// More than the tolerated fraction of realizations failed.
    pub failed: bool,
    pub realizations: Vec<Realization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderEnsemble {
    pub confidence: f64,
    pub points: Vec<DisorderPoint>,
}

/// Mean and Student-t confidence half-width.
pub fn mean_ci(values: &[f64], confidence: f64) -> Option<(f64, f64)> {
    let r = values.len();
    if r == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return Some((mean, f64::INFINITY));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
        .ok()?
        .inverse_cdf(0.5 + 0.5 * confidence);
    Some((mean, t * (var / r as f64).sqrt()))
}

/// One realization: integrate to the horizon for `v_wf`, then on to the
/// steady state for `σ_m`.
fn run_realization(cfg: &RunConfig, d: f64, eta: f64, index: usize) -> Result<Realization> {
    let seed = cfg.ensemble.seed_base.wrapping_add(index as u64);
    let mut c = cfg.with_eta(eta);
    c.lattice.bias_step = 0.0;
    c.lattice.disorder = d;
    c.lattice.seed = seed;
    let mut out = Realization {
        disorder: d,
        eta,
        index,
        seed,
        sigma_m: f64::NAN,
        x_m: f64::NAN,
        v_wf: f64::NAN,
        flux_imbalance: f64::NAN,
        error: None,
    };
    let scn = Scenario::build(&c)?;
    let result = (|| {
        let horizon = c.horizon();
        let run = run_transport(&scn, &c, horizon, 1)?;
        let sys = scn.equations()?;
        let steady = find_steady_state(&sys, run.trajectory.last())?;
        let profile = photon_density(&steady, &scn.modes)?;
        let flux = sys.flux_imbalance(&steady);
        Ok::<_, Error>((run.summary.v_wf, center_of_mass(&profile)?, width(&profile)?, flux))
    })();
    match result {
        Ok((v, xm, s, flux)) => {
            out.v_wf = v;
            out.flux_imbalance = flux;
            out.x_m = xm;
            out.sigma_m = s;
        }
        Err(e) if is_task_failure(&e) => out.error = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(out)
}

/// Disorder ensemble over the configured `d × η` grid on the unbiased
/// lattice. Realizations found in `completed` are reused instead of rerun.
pub fn run_disorder_ensemble(cfg: &RunConfig, completed: &[Realization]) -> Result<DisorderEnsemble> {
    run_disorder_ensemble_with(cfg, completed, |_| Ok(()))
}

/// As [`run_disorder_ensemble`], calling `on_point` after each grid point
/// so callers can persist progress.
pub fn run_disorder_ensemble_with<F>(cfg: &RunConfig, completed: &[Realization], mut on_point: F) -> Result<DisorderEnsemble>
where
    F: FnMut(&DisorderPoint) -> Result<()>,
{
    cfg.validate()?;
    let e = &cfg.ensemble;
    let ds = sorted_unique(&e.disorder);
    let etas = sorted_unique(&e.disorder_etas);
    if ds.is_empty() || etas.is_empty() {
        return Err(Error::Config("ensemble grids must be nonempty".into()));
    }
    if let Some(d) = ds.iter().find(|&&d| d > 0.1) {
        return Err(Error::Config(format!("disorder degree {d} exceeds 0.1 V_0")));
    }
    let done: HashMap<_, _> = completed
        .iter()
        .filter(|r| r.seed == e.seed_base.wrapping_add(r.index as u64))
        .map(|r| (r.key(), r.clone()))
        .collect();
    let indices: Vec<usize> = (0..e.realizations).collect();
    let mut points = Vec::new();
    for &d in &ds {
        for &eta in &etas {
            let realizations = run_pool(e.workers, &indices, |&i| match done.get(&(d.to_bits(), eta.to_bits(), i)) {
                Some(r) => Ok(r.clone()),
                None => run_realization(cfg, d, eta, i),
            })?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let point = aggregate(d, eta, realizations, e.confidence, e.max_failure_fraction);
            on_point(&point)?;
            points.push(point);
        }
    }
    Ok(DisorderEnsemble {
        confidence: e.confidence,
        points,
    })
}

fn aggregate(d: f64, eta: f64, realizations: Vec<Realization>, confidence: f64, max_failure: f64) -> DisorderPoint {
    let good: Vec<&Realization> = realizations.iter().filter(|r| r.ok()).collect();
    let failures = realizations.len() - good.len();
    let sigmas: Vec<f64> = good.iter().map(|r| r.sigma_m).collect();
    let (mean_sigma, ci) = mean_ci(&sigmas, confidence).unwrap_or((f64::NAN, f64::NAN));
    let mean_v_wf = if good.is_empty() {
        f64::NAN
    } else {
        good.iter().map(|r| r.v_wf).sum::<f64>() / good.len() as f64
    };
    DisorderPoint {
        disorder: d,
        eta,
        mean_sigma,
        ci_half_width: ci,
        mean_v_wf,
        failures,
        failed: failures as f64 > max_failure * realizations.len() as f64,
        realizations,
    }
}

impl DisorderEnsemble {
    pub fn point(&self, disorder: f64, eta: f64) -> Option<&DisorderPoint> {
        self.points.iter().find(|p| p.disorder == disorder && p.eta == eta)
    }

    /// Interior disorder degrees whose mean width exceeds that of the next
    /// weaker disorder by more than its confidence half-width, per `η`.
    /// Reported only; whether this happens depends on the parameters.
    pub fn non_monotonic(&self) -> Vec<(f64, f64)> {
        let mut etas: Vec<f64> = self.points.iter().map(|p| p.eta).collect();
        etas = sorted_unique(&etas);
        let mut out = Vec::new();
        for eta in etas {
            let mut row: Vec<&DisorderPoint> = self.points.iter().filter(|p| p.eta == eta).collect();
            row.sort_by(|a, b| a.disorder.total_cmp(&b.disorder));
            for i in 1..row.len().saturating_sub(1) {
                if row[i].mean_sigma > row[i - 1].mean_sigma + row[i].ci_half_width {
                    out.push((row[i].disorder, eta));
                }
            }
        }
        out
    }
}

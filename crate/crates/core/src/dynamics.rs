//! Semiclassical rate equations for photon numbers `n_k` and binned
//! molecular excitations `m_j`:
//!
//! ```text
//! dn_k/dt = -κ n_k + Σ_j g_kj [E_k m_j (n_k + 1) - A_k (M - m_j) n_k]
//! dm_j/dt = -{Γ↓ + Σ_k E_k g_kj (n_k + 1)} m_j + {Γ↑_j + Σ_k A_k g_kj n_k} (M - m_j)
//! ```

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigenmodes::OverlapMatrix;
use crate::error::{Error, Result};
use crate::spectral::ModeRates;
use crate::stiff::{self, Flow, StepControl, StiffSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kappa: f64,
    pub gamma_down: f64,
    /// Pump rate `Γ↑(x_j)` of every bin.
    pub pump: Vec<f64>,
    /// Molecules per bin, `M`.
    pub molecules: f64,
    pub t_final: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub steady_tol: f64,
    /// Give up on the steady state after this time.
    pub t_max: f64,
    /// Photon number above which a mode counts as condensed.
    pub condense_threshold: f64,
    /// Accepted-step budget of one integration call.
    pub max_steps: usize,
}

impl SimConfig {
    pub fn new(pump: Vec<f64>) -> Self {
        Self {
            kappa: 1.0,
            gamma_down: 1e-3,
            pump,
            molecules: 1e6,
            t_final: 200.0,
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            steady_tol: 1e-9,
            t_max: 1e6,
            condense_threshold: 10.0,
            max_steps: 200_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::Range("kappa must be positive".into()));
        }
        if !(self.gamma_down >= 0.0) {
            return Err(Error::Range("gamma_down must be non-negative".into()));
        }
        if self.pump.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Range("pump rates must be non-negative".into()));
        }
        if !(self.molecules >= 1.0) {
            return Err(Error::Range("molecules per bin must be at least 1".into()));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.steady_tol > 0.0) {
            return Err(Error::Range("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Total pump flux into unexcited molecules, `Σ_j Γ↑_j (M - m_j)`.
    pub fn pump_flux(&self, m: &[f64]) -> f64 {
        self.pump
            .iter()
            .zip(m)
            .map(|(p, mj)| p * (self.molecules - mj))
            .sum()
    }
}

/// Gaussian pump of peak `peak` centred at `center`, sampled at bin centres.
pub fn gaussian_pump(bin_centers: &[f64], center: f64, width: f64, peak: f64) -> Vec<f64> {
    bin_centers
        .iter()
        .map(|x| peak * (-(x - center).powi(2) / (2.0 * width * width)).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: f64,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
}

impl SystemState {
    pub fn vacuum(modes: usize, bins: usize) -> Self {
        Self {
            t: 0.0,
            n: vec![0.0; modes],
            m: vec![0.0; bins],
        }
    }

    fn pack(&self) -> Vec<f64> {
        self.n.iter().chain(&self.m).copied().collect()
    }

    fn unpack(t: f64, y: &[f64], modes: usize) -> Self {
        Self {
            t,
            n: y[..modes].to_vec(),
            m: y[modes..].to_vec(),
        }
    }
}

/// The closed rate equations for one configuration.
#[derive(Debug, Clone)]
pub struct RateEquations {
    modes: usize,
    bins: usize,
    /// Row-major `g[k * bins + j]`.
    g: Vec<f64>,
    absorption: Vec<f64>,
    emission: Vec<f64>,
    config: SimConfig,
}

impl RateEquations {
    pub fn new(overlaps: &OverlapMatrix, rates: &[ModeRates], config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let modes = overlaps.num_modes();
        let bins = overlaps.num_bins();
        if rates.len() != modes {
            return Err(Error::DimensionMismatch(format!(
                "{} rate pairs for {modes} modes",
                rates.len()
            )));
        }
        if config.pump.len() != bins {
            return Err(Error::DimensionMismatch(format!(
                "{} pump entries for {bins} bins",
                config.pump.len()
            )));
        }
        let g = overlaps.entries.iter().flatten().copied().collect();
        Ok(Self {
            modes,
            bins,
            g,
            absorption: rates.iter().map(|r| r.absorption).collect(),
            emission: rates.iter().map(|r| r.emission).collect(),
            config: config.clone(),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.modes
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn absorption(&self) -> &[f64] {
        &self.absorption
    }

    pub fn emission(&self) -> &[f64] {
        &self.emission
    }

    pub fn overlap(&self, k: usize, j: usize) -> f64 {
        self.g[k * self.bins + j]
    }

    fn check_dims(&self, state: &SystemState) -> Result<()> {
        if state.n.len() != self.modes || state.m.len() != self.bins {
            return Err(Error::DimensionMismatch(format!(
                "state has {} modes and {} bins, system has {} and {}",
                state.n.len(),
                state.m.len(),
                self.modes,
                self.bins
            )));
        }
        Ok(())
    }

    /// Time derivatives `(dn, dm)`.
    pub fn derivatives(&self, state: &SystemState) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(state)?;
        let mut out = vec![0.0; self.modes + self.bins];
        self.eval(&state.n, &state.m, &mut out);
        let dm = out.split_off(self.modes);
        Ok((out, dm))
    }

    fn eval(&self, n: &[f64], m: &[f64], out: &mut [f64]) {
        let (kk, ss) = (self.modes, self.bins);
        let mm = self.config.molecules;
        let (dn, dm) = out.split_at_mut(kk);
        dm.fill(0.0);
        // dm accumulates Σ_k E_k g_kj (n_k+1) in the first pass, Σ_k A_k g_kj n_k in `up`
        let mut up = vec![0.0; ss];
        for k in 0..kk {
            let row = &self.g[k * ss..(k + 1) * ss];
            let (a, e) = (self.absorption[k], self.emission[k]);
            let mut excited = 0.0;
            let mut ground = 0.0;
            for j in 0..ss {
                excited += row[j] * m[j];
                ground += row[j] * (mm - m[j]);
                dm[j] += e * row[j] * (n[k] + 1.0);
                up[j] += a * row[j] * n[k];
            }
            dn[k] = -self.config.kappa * n[k] + e * excited * (n[k] + 1.0) - a * ground * n[k];
        }
        for j in 0..ss {
            let down = self.config.gamma_down + dm[j];
            let upj = self.config.pump[j] + up[j];
            dm[j] = -down * m[j] + upj * (mm - m[j]);
        }
    }

    /// Analytic Jacobian of [`derivatives`](Self::derivatives) in the
    /// ordering `(n_0 … n_{K-1}, m_0 … m_{S-1})`.
    pub fn jacobian(&self, state: &SystemState) -> Result<DMatrix<f64>> {
        self.check_dims(state)?;
        let dim = self.modes + self.bins;
        let mut j = DMatrix::zeros(dim, dim);
        let y = state.pack();
        self.fill_jacobian(&y, &mut j);
        Ok(j)
    }

    fn fill_jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        let (kk, ss) = (self.modes, self.bins);
        let mm = self.config.molecules;
        let (n, m) = y.split_at(kk);
        jac.fill(0.0);
        let mut down = vec![self.config.gamma_down; ss];
        let mut up = self.config.pump.clone();
        for k in 0..kk {
            let row = &self.g[k * ss..(k + 1) * ss];
            let (a, e) = (self.absorption[k], self.emission[k]);
            let mut diag = -self.config.kappa;
            for j in 0..ss {
                let g = row[j];
                diag += g * (e * m[j] - a * (mm - m[j]));
                jac[(k, kk + j)] = g * (e * (n[k] + 1.0) + a * n[k]);
                jac[(kk + j, k)] = g * (-e * m[j] + a * (mm - m[j]));
                down[j] += e * g * (n[k] + 1.0);
                up[j] += a * g * n[k];
            }
            jac[(k, k)] = diag;
        }
        for j in 0..ss {
            jac[(kk + j, kk + j)] = -down[j] - up[j];
        }
    }

    /// Steady-state flux balance `Σ Γ↑(M - m) - Γ↓ Σ m - κ Σ n`, relative to the pump flux.
    pub fn flux_imbalance(&self, state: &SystemState) -> f64 {
        let c = &self.config;
        let pump = c.pump_flux(&state.m);
        let residual = pump - c.gamma_down * state.m.iter().sum::<f64>() - c.kappa * state.n.iter().sum::<f64>();
        if pump > 0.0 {
            residual.abs() / pump
        } else {
            residual.abs()
        }
    }

    fn steady_threshold(&self, y: &[f64]) -> f64 {
        let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.config.steady_tol * self.config.kappa.max(self.config.gamma_down) * scale
    }

    fn is_steady(&self, y: &[f64], f: &[f64]) -> bool {
        let fmax = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        fmax <= self.steady_threshold(y)
    }

    /// Slowest relaxation time scale, used as the dwell time of the steady-state test.
    fn dwell(&self) -> f64 {
        let c = &self.config;
        let slow = c.kappa.min(if c.gamma_down > 0.0 { c.gamma_down } else { c.kappa });
        1.0 / slow
    }

    fn clamp_state(&self, t: f64, y: &mut [f64]) -> Result<()> {
        let tol = self.config.abs_tol;
        let mm = self.config.molecules;
        for (i, v) in y.iter_mut().enumerate() {
            let upper = if i < self.modes { f64::INFINITY } else { mm };
            if *v < -tol || *v > upper + tol || !v.is_finite() {
                return Err(Error::InvariantViolation {
                    t,
                    what: format!("component {i} = {v}"),
                });
            }
            *v = v.clamp(0.0, upper);
        }
        Ok(())
    }
}

impl StiffSystem for RateEquations {
    fn dim(&self) -> usize {
        self.modes + self.bins
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let (n, m) = y.split_at(self.modes);
        self.eval(n, m, out);
    }

    fn jacobian(&self, y: &[f64], out: &mut DMatrix<f64>) {
        self.fill_jacobian(y, out);
    }

    fn bound_violation(&self, y: &[f64], tol: f64) -> Option<String> {
        let mm = self.config.molecules;
        y.iter().enumerate().find_map(|(i, &v)| {
            let upper = if i < self.modes { f64::INFINITY } else { mm };
            (v < -tol || v > upper + tol).then(|| format!("component {i} = {v}"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub steady_state_reached: bool,
    pub t_steady: Option<f64>,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// CSV with columns `t, n_0 … n_{K-1}, m_0 … m_{S-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let first = &self.states[0];
        write!(w, "t")?;
        for k in 0..first.n.len() {
            write!(w, ",n_{k}")?;
        }
        for j in 0..first.m.len() {
            write!(w, ",m_{j}")?;
        }
        writeln!(w)?;
        for s in &self.states {
            write!(w, "{}", s.t)?;
            for v in s.n.iter().chain(&s.m) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    pub t_final: f64,
    /// Times at which states are recorded; must be increasing and within `[t0, t_final]`.
    pub sample_times: Vec<f64>,
    /// End the run as soon as the steady-state criterion has held for one dwell time.
    pub stop_at_steady: bool,
}

impl IntegrateOptions {
    /// `count` evenly spaced samples on `(t0, t_final]`.
    pub fn uniform(t0: f64, t_final: f64, count: usize) -> Self {
        let sample_times = (1..=count)
            .map(|i| t0 + (t_final - t0) * i as f64 / count as f64)
            .collect();
        Self {
            t_final,
            sample_times,
            stop_at_steady: false,
        }
    }
}

fn step_control(sys: &RateEquations, t_span: f64) -> StepControl {
    let c = sys.config();
    StepControl {
        abs_tol: c.abs_tol,
        rel_tol: c.rel_tol,
        initial_step: 1e-3 / c.kappa,
        max_step: (t_span / 4.0).max(1e-3 / c.kappa),
    }
}

/// Integrate from `initial`; the returned trajectory starts with `initial`
/// followed by the requested samples (and the final state if the run stops early).
pub fn integrate(sys: &RateEquations, initial: &SystemState, opts: &IntegrateOptions) -> Result<Trajectory> {
    sys.check_dims(initial)?;
    let mut y0 = initial.pack();
    sys.clamp_state(initial.t, &mut y0)?;
    if opts.sample_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Range("sample times must be strictly increasing".into()));
    }
    let modes = sys.num_modes();
    let mut states = vec![initial.clone()];
    let mut next_sample = opts
        .sample_times
        .iter()
        .position(|&t| t > initial.t)
        .unwrap_or(opts.sample_times.len());
    let dwell = sys.dwell();
    let mut steady_since: Option<f64> = None;
    let mut t_steady = None;
    let mut buf = vec![0.0; y0.len()];
    let max_steps = sys.config().max_steps;
    let mut taken = 0usize;

    // initial state may already be stationary (e.g. the dark state)
    let mut f0 = vec![0.0; y0.len()];
    sys.rhs(&y0, &mut f0);
    if f0.iter().all(|v| *v == 0.0) {
        t_steady = Some(initial.t);
        if opts.stop_at_steady {
            return Ok(Trajectory {
                states,
                steady_state_reached: true,
                t_steady,
                steps: 0,
            });
        }
    }

    let out = stiff::integrate(sys, initial.t, &y0, opts.t_final, step_control(sys, opts.t_final - initial.t), |v| {
        let t1 = v.t0 + v.h;
        taken += 1;
        if taken > max_steps {
            return Err(Error::StepLimit { t: v.t0, steps: max_steps });
        }
        while next_sample < opts.sample_times.len() && opts.sample_times[next_sample] <= t1 * (1.0 + 1e-15) {
            let ts = opts.sample_times[next_sample];
            v.interpolate(ts, &mut buf);
            sys.clamp_state(ts, &mut buf)?;
            states.push(SystemState::unpack(ts, &buf, modes));
            next_sample += 1;
        }
        if sys.is_steady(v.y1, v.f1) {
            let since = *steady_since.get_or_insert(v.t0);
            if t_steady.is_none() && t1 - since >= dwell {
                t_steady = Some(t1);
                if opts.stop_at_steady {
                    return Ok(Flow::Stop);
                }
            }
        } else {
            steady_since = None;
        }
        Ok(Flow::Continue)
    })?;
    let last_t = states.last().map(|s| s.t).unwrap_or(f64::NEG_INFINITY);
    if out.t > last_t * (1.0 + 1e-15) + f64::MIN_POSITIVE {
        let mut y = out.y;
        sys.clamp_state(out.t, &mut y)?;
        let is_sample = opts.sample_times.iter().any(|&ts| (ts - out.t).abs() <= 1e-12 * out.t.abs());
        if !is_sample || states.last().map(|s| s.t) != Some(out.t) {
            states.push(SystemState::unpack(out.t, &y, modes));
        }
    }
    Ok(Trajectory {
        states,
        steady_state_reached: t_steady.is_some(),
        t_steady,
        steps: out.steps,
    })
}

/// Newton iteration on `f(y) = 0` from `y`; `None` unless it converges
/// close to the starting point and inside the physical bounds.
fn polish(sys: &RateEquations, y: &[f64]) -> Option<Vec<f64>> {
    let dim = y.len();
    let mut y = y.to_vec();
    let y_start = y.clone();
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let c = sys.config();
    let target = 1e-13 * c.kappa.max(c.gamma_down) * scale;
    let mut f = vec![0.0; dim];
    let mut jac = DMatrix::zeros(dim, dim);
    for _ in 0..30 {
        sys.rhs(&y, &mut f);
        let fmax = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if fmax <= target {
            break;
        }
        sys.fill_jacobian(&y, &mut jac);
        let delta = jac.clone().lu().solve(&DVector::from_column_slice(&f))?;
        let mut next: Vec<f64> = y.iter().zip(delta.iter()).map(|(a, d)| a - d).collect();
        if sys.bound_violation(&next, 0.0).is_some() {
            return None;
        }
        std::mem::swap(&mut y, &mut next);
        if delta.iter().all(|d| d.abs() <= 1e-15 * scale) {
            break;
        }
    }
    sys.rhs(&y, &mut f);
    let fmax = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let moved = y.iter().zip(&y_start).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let ok = fmax <= 1e3 * target && moved <= 1e-3 * scale;
    ok.then_some(y)
}

/// Integrate the constant-pump system until the steady-state criterion holds
/// and refine the result by Newton iteration.
pub fn find_steady_state(sys: &RateEquations, initial: &SystemState) -> Result<SystemState> {
    sys.check_dims(initial)?;
    let t_max = sys.config().t_max;
    let mut state = initial.clone();
    let chunk = (sys.config().t_final.max(sys.dwell())).min(t_max);
    let mut steps = 0;
    loop {
        let t_end = (state.t + 4.0 * chunk).min(t_max);
        let opts = IntegrateOptions {
            t_final: t_end,
            sample_times: Vec::new(),
            stop_at_steady: true,
        };
        let traj = integrate(sys, &state, &opts)?;
        steps += traj.steps;
        if steps > sys.config().max_steps {
            return Err(Error::StepLimit {
                t: traj.last().t,
                steps: sys.config().max_steps,
            });
        }
        state = traj.last().clone();
        if traj.steady_state_reached {
            let y = state.pack();
            if let Some(mut y) = polish(sys, &y) {
                sys.clamp_state(state.t, &mut y)?;
                return Ok(SystemState::unpack(state.t, &y, sys.num_modes()));
            }
        }
        if state.t >= t_max {
            return Err(Error::NoConvergence { t_max });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ModeRates;

    fn overlaps(entries: Vec<Vec<f64>>) -> OverlapMatrix {
        let s = entries[0].len();
        OverlapMatrix {
            entries,
            bin_edges: (0..=s).map(|j| j as f64 / s as f64).collect(),
        }
    }

    fn rates(pairs: &[(f64, f64)]) -> Vec<ModeRates> {
        pairs
            .iter()
            .map(|&(a, e)| ModeRates { absorption: a, emission: e, clamped: false })
            .collect()
    }

    fn three_by_three() -> (OverlapMatrix, Vec<ModeRates>) {
        let g = overlaps(vec![
            vec![0.8, 0.15, 0.05],
            vec![0.1, 0.8, 0.1],
            vec![0.05, 0.15, 0.8],
        ]);
        let r = rates(&[(2e-6, 1e-5), (4e-6, 1e-5), (8e-6, 1e-5)]);
        (g, r)
    }

    #[test]
    fn vacuum_is_fixed_point_without_pump() {
        let (g, r) = three_by_three();
        let cfg = SimConfig::new(vec![0.0; 3]);
        let sys = RateEquations::new(&g, &r, &cfg).unwrap();
        let (dn, dm) = sys.derivatives(&SystemState::vacuum(3, 3)).unwrap();
        assert!(dn.iter().chain(&dm).all(|v| *v == 0.0));
    }

    #[test]
    fn full_inversion_gives_spontaneous_emission() {
        let (g, r) = three_by_three();
        let cfg = SimConfig::new(vec![0.0; 3]);
        let sys = RateEquations::new(&g, &r, &cfg).unwrap();
        let s = SystemState {
            t: 0.0,
            n: vec![0.0; 3],
            m: vec![cfg.molecules; 3],
        };
        let (dn, _) = sys.derivatives(&s).unwrap();
        for k in 0..3 {
            let expect: f64 = (0..3).map(|j| g.get(k, j) * r[k].emission * cfg.molecules).sum();
            assert!((dn[k] - expect).abs() < 1e-12 * expect);
            assert!(dn[k] > 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_detected() {
        let (g, r) = three_by_three();
        assert!(matches!(
            RateEquations::new(&g, &r, &SimConfig::new(vec![0.0; 2])),
            Err(Error::DimensionMismatch(_))
        ));
        let sys = RateEquations::new(&g, &r, &SimConfig::new(vec![0.0; 3])).unwrap();
        assert!(matches!(
            sys.derivatives(&SystemState::vacuum(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let (g, r) = three_by_three();
        let mut cfg = SimConfig::new(vec![0.0, 0.05, 0.0]);
        cfg.molecules = 1e6;
        let sys = RateEquations::new(&g, &r, &cfg).unwrap();
        let s = SystemState {
            t: 0.0,
            n: vec![1.5e4, 320.0, 2.0],
            m: vec![2.1e5, 4.4e5, 1.7e5],
        };
        let jac = sys.jacobian(&s).unwrap();
        let y = s.pack();
        let dim = y.len();
        let mut fp = vec![0.0; dim];
        let mut fm = vec![0.0; dim];
        for c in 0..dim {
            let h = 1e-6 * y[c].abs().max(1.0);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[c] += h;
            ym[c] -= h;
            sys.rhs(&yp, &mut fp);
            sys.rhs(&ym, &mut fm);
            for rix in 0..dim {
                let fd = (fp[rix] - fm[rix]) / (2.0 * h);
                let an = jac[(rix, c)];
                let scale = an.abs().max(1e-6);
                assert!((fd - an).abs() <= 1e-4 * scale, "J[{rix},{c}] analytic {an} fd {fd}");
            }
        }
    }

    #[test]
    fn undriven_system_relaxes_to_dark_state() {
        let (g, r) = three_by_three();
        let cfg = SimConfig::new(vec![0.0; 3]);
        let sys = RateEquations::new(&g, &r, &cfg).unwrap();
        let init = SystemState {
            t: 0.0,
            n: vec![0.0; 3],
            m: vec![5e5, 0.0, 0.0],
        };
        let opts = IntegrateOptions::uniform(0.0, 2e4, 200);
        let traj = integrate(&sys, &init, &opts).unwrap();
        let peak = traj.states.iter().map(|s| s.n[0]).fold(0.0, f64::max);
        assert!(peak > 1.0);
        let last = traj.last();
        assert!(last.n.iter().all(|v| *v < 1e-3), "{:?}", last.n);
        assert!(last.m.iter().all(|v| *v < 1e-2), "{:?}", last.m);
        for s in &traj.states {
            assert!(s.n.iter().all(|v| *v >= 0.0));
            assert!(s.m.iter().all(|v| *v >= 0.0 && *v <= cfg.molecules));
        }
        for w in traj.states.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn zero_pump_steady_state_is_vacuum() {
        let (g, r) = three_by_three();
        let cfg = SimConfig::new(vec![0.0; 3]);
        let sys = RateEquations::new(&g, &r, &cfg).unwrap();
        let s = find_steady_state(&sys, &SystemState::vacuum(3, 3)).unwrap();
        assert!(s.n.iter().chain(&s.m).all(|v| *v == 0.0));
    }

    #[test]
    fn pumped_steady_state_balances_flux() {
        let (g, r) = three_by_three();
        let cfg = SimConfig::new(vec![0.02, 0.2, 0.02]);
        let sys = RateEquations::new(&g, &r, &cfg).unwrap();
        let s = find_steady_state(&sys, &SystemState::vacuum(3, 3)).unwrap();
        assert!(sys.flux_imbalance(&s) < 1e-6, "imbalance {}", sys.flux_imbalance(&s));
        let (dn, dm) = sys.derivatives(&s).unwrap();
        let scale = s.m.iter().fold(0.0f64, |a, v| a.max(*v));
        assert!(dn.iter().chain(&dm).all(|v| v.abs() < 1e-9 * scale));
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory {
            states: vec![SystemState::vacuum(2, 3)],
            steady_state_reached: false,
            t_steady: None,
            steps: 0,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,n_0,n_1,m_0,m_1,m_2");
    }
}

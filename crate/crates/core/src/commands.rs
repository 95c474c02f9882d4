//! The experiments behind the command-line subcommands. Each writes its
//! CSV/JSON files plus a `manifest.json` into an output directory.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Scenario};
use crate::dynamics::{find_steady_state, RateEquations, SystemState};
use crate::eigenmodes::nn_overlap;
use crate::ensemble::{
    run_disorder_ensemble_with, run_phase_sweep, run_transport, DisorderEnsemble, PhaseSweep, Realization, SweepPoint,
};
use crate::error::Result;
use crate::observables::{center_of_mass, excitation_fraction, photon_density, wavefront, width};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Modes,
    Evolve,
    Sweep,
    Ensemble,
    Boundary,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Modes => "modes",
            CommandKind::Evolve => "evolve",
            CommandKind::Sweep => "sweep",
            CommandKind::Ensemble => "ensemble",
            CommandKind::Boundary => "boundary",
        }
    }
}

/// Provenance record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: CommandKind,
    pub version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// SHA-256 of every file written, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    /// `ok`, `running`, or the error that stopped the run.
    pub status: String,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the resolved configuration. The worker count does not change
/// results and is left out.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.ensemble.workers = 0;
    Ok(sha256_hex(&serde_json::to_vec(&c)?))
}

fn seeds(kind: CommandKind, cfg: &RunConfig) -> Vec<u64> {
    match kind {
        CommandKind::Ensemble => (0..cfg.ensemble.realizations as u64)
            .map(|i| cfg.ensemble.seed_base.wrapping_add(i))
            .collect(),
        _ if cfg.lattice.disorder > 0.0 => vec![cfg.lattice.seed],
        _ => Vec::new(),
    }
}

struct Output {
    dir: PathBuf,
    kind: CommandKind,
    cfg: RunConfig,
    hash: String,
    files: BTreeMap<String, String>,
    start: Instant,
}

impl Output {
    fn new(kind: CommandKind, cfg: &RunConfig, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            kind,
            cfg: cfg.clone(),
            hash: config_hash(cfg)?,
            files: BTreeMap::new(),
            start: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a file through `f` and record its hash.
    fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        drop(w);
        self.record(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn manifest(&self, status: &str) -> Result<()> {
        let m = Manifest {
            command: self.kind,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.clone(),
            config_hash: self.hash.clone(),
            seeds: seeds(self.kind, &self.cfg),
            outputs: self.files.clone(),
            status: status.to_string(),
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        fs::write(self.path(MANIFEST), bytes)?;
        Ok(())
    }

    /// Write the final manifest with the outcome of `result`.
    fn finish<T>(self, result: Result<T>) -> Result<Manifest> {
        let status = match &result {
            Ok(_) => "ok".to_string(),
            Err(e) => e.to_string(),
        };
        self.manifest(&status)?;
        result?;
        Manifest::load(&self.path(MANIFEST))
    }
}

/// Run one command into `out_dir`. On failure the manifest records the error
/// next to whatever outputs were already written.
pub fn run_command(kind: CommandKind, cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let mut out = Output::new(kind, cfg, out_dir)?;
    let result = match kind {
        CommandKind::Modes => cmd_modes(&mut out),
        CommandKind::Evolve => cmd_evolve(&mut out),
        CommandKind::Sweep => cmd_sweep(&mut out),
        CommandKind::Boundary => cmd_boundary(&mut out),
        CommandKind::Ensemble => cmd_ensemble(&mut out),
    };
    out.finish(result)
}

#[derive(Serialize)]
struct ModesSummary {
    energies: Vec<f64>,
    inverse_participation: Vec<f64>,
    nn_overlap: f64,
    truncated: bool,
    max_residual: f64,
    potential: serde_json::Value,
}

fn cmd_modes(out: &mut Output) -> Result<()> {
    let scn = Scenario::build(&out.cfg)?;
    out.write("potential.csv", |w| Ok(scn.profile.write_csv(w)?))?;
    out.write("modes.csv", |w| Ok(scn.modes.write_csv(w)?))?;
    let summary = ModesSummary {
        energies: scn.modes.energies.clone(),
        inverse_participation: scn.modes.inverse_participation(),
        nn_overlap: nn_overlap(&scn.overlaps)?,
        truncated: scn.modes.truncated,
        max_residual: scn.modes.max_residual,
        potential: scn.profile.provenance_json(),
    };
    out.json("modes_summary.json", &summary)
}

#[derive(Serialize)]
struct SteadySummary {
    t: f64,
    n: Vec<f64>,
    m: Vec<f64>,
    excitation: Vec<f64>,
    total_photons: f64,
    x_m: Option<f64>,
    sigma_m: Option<f64>,
    x_wf: Option<f64>,
    /// Flux imbalance normalized by the total pump.
    flux_imbalance: f64,
    eta: f64,
    horizon: f64,
    v_wf: f64,
}

fn steady_summary(
    sys: &RateEquations,
    scn: &Scenario,
    state: &SystemState,
    quantile: f64,
    horizon: f64,
    v_wf: f64,
) -> Result<SteadySummary> {
    let p = photon_density(state, &scn.modes)?;
    let lit = p.total > 0.0;
    Ok(SteadySummary {
        t: state.t,
        n: state.n.clone(),
        m: state.m.clone(),
        excitation: excitation_fraction(state, scn.sim.molecules),
        total_photons: state.n.iter().sum(),
        x_m: lit.then(|| center_of_mass(&p)).transpose()?,
        sigma_m: lit.then(|| width(&p)).transpose()?,
        x_wf: lit.then(|| wavefront(&p, quantile)).transpose()?,
        flux_imbalance: sys.flux_imbalance(state),
        eta: scn.eta,
        horizon,
        v_wf,
    })
}

/// Indices of `frames` evenly spread samples out of `count`, ends included.
fn frame_indices(count: usize, frames: usize) -> Vec<usize> {
    if count == 0 || frames == 0 {
        return Vec::new();
    }
    if frames >= count {
        return (0..count).collect();
    }
    let mut idx: Vec<usize> = (0..frames)
        .map(|i| (i as f64 * (count - 1) as f64 / (frames - 1).max(1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

fn cmd_evolve(out: &mut Output) -> Result<()> {
    let cfg = out.cfg.clone();
    let scn = Scenario::build(&cfg)?;
    let sys = scn.equations()?;
    let omegas = scn.spectral.cavity_energies(&scn.modes);
    out.write("rates.csv", |w| {
        writeln!(w, "k,omega,detuning,absorption,emission,nu")?;
        for (k, (o, r)) in omegas.iter().zip(&scn.rates).enumerate() {
            let d = scn.spectral.detuning(*o);
            writeln!(w, "{k},{o},{d},{},{},{}", r.absorption, r.emission, scn.spectral.nu(d))?;
        }
        Ok(())
    })?;
    let run = run_transport(&scn, &cfg, cfg.dynamics.t_final, cfg.dynamics.samples)?;
    out.write("trajectory.csv", |w| Ok(run.trajectory.write_csv(w)?))?;
    let states = &run.trajectory.states;
    out.write("density_frames.csv", |w| {
        writeln!(w, "t,x,I")?;
        for i in frame_indices(states.len(), cfg.observables.frames) {
            let p = photon_density(&states[i], &scn.modes)?;
            for (x, v) in p.positions.iter().zip(&p.density) {
                writeln!(w, "{},{x},{v}", states[i].t)?;
            }
        }
        Ok(())
    })?;
    out.write("transport.csv", |w| Ok(run.summary.write_csv(w)?))?;
    let horizon = run.summary.horizon;
    let v_wf = run.summary.v_wf;
    let q = cfg.observables.quantile;
    match find_steady_state(&sys, run.trajectory.last()) {
        Ok(ss) => out.json("steady_state.json", &steady_summary(&sys, &scn, &ss, q, horizon, v_wf)?),
        Err(e) => {
            // keep the last integrated state so the partial run can be inspected
            let last = steady_summary(&sys, &scn, run.trajectory.last(), q, horizon, v_wf)?;
            out.json("steady_state.json", &serde_json::json!({ "converged": false, "last": last }))?;
            Err(e)
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    well_width: f64,
    pump: f64,
    eta: f64,
    cutoff_detuning: f64,
    kappa: f64,
    x_wf: f64,
    x_m: f64,
    sigma_m: f64,
    v_wf: f64,
    v_res: Option<f64>,
    v_eff: Option<f64>,
    v_norm: Option<f64>,
    n_s: f64,
    nn_overlap: f64,
    model_sites: Option<usize>,
    v_mod: Option<f64>,
    status: String,
}

fn sweep_row(sweep: &PhaseSweep, pt: &SweepPoint) -> SweepRow {
    let v_eff = sweep.effective_speed(pt);
    let v_max = sweep.v_max_at_pump(pt.pump);
    SweepRow {
        well_width: pt.well_width,
        pump: pt.pump,
        eta: pt.eta,
        cutoff_detuning: pt.cutoff_detuning,
        kappa: pt.kappa,
        x_wf: pt.x_wf,
        x_m: pt.x_m,
        sigma_m: pt.sigma_m,
        v_wf: pt.v_wf,
        v_res: v_eff.map(|dv| pt.v_wf - dv),
        v_eff,
        v_norm: v_max.filter(|v| *v > 0.0 && pt.ok()).map(|v| pt.v_wf / v),
        n_s: pt.n_s,
        nn_overlap: pt.nn_overlap,
        model_sites: pt.model_sites,
        v_mod: pt.v_mod,
        status: pt.error.clone().unwrap_or_else(|| "ok".into()),
    }
}

fn write_sweep_csv(out: &mut Output, name: &str, sweep: &PhaseSweep) -> Result<()> {
    out.write(name, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for pt in &sweep.points {
            csv.serialize(sweep_row(sweep, pt))?;
        }
        csv.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct SweepSummary {
    horizon: f64,
    etas: Vec<f64>,
    pumps: Vec<f64>,
    well_widths: Vec<f64>,
    v_max: Option<f64>,
    v_max_by_pump: Vec<(f64, Option<f64>)>,
    rows: Vec<crate::ensemble::SpeedRow>,
    failed_points: usize,
}

fn cmd_sweep(out: &mut Output) -> Result<()> {
    let sweep = run_phase_sweep(&out.cfg)?;
    write_sweep_csv(out, "sweep.csv", &sweep)?;
    let summary = SweepSummary {
        horizon: sweep.horizon,
        etas: sweep.etas.clone(),
        pumps: sweep.pumps.clone(),
        well_widths: sweep.well_widths.clone(),
        v_max: sweep.v_max(),
        v_max_by_pump: sweep.pumps.iter().map(|&p| (p, sweep.v_max_at_pump(p))).collect(),
        rows: sweep.rows(),
        failed_points: sweep.points.iter().filter(|pt| !pt.ok()).count(),
    };
    out.json("sweep_summary.json", &summary)
}

#[derive(Serialize)]
struct BoundaryRow {
    source: String,
    overlap: Option<f64>,
    pump: f64,
    eta_critical: Option<f64>,
}

fn cmd_boundary(out: &mut Output) -> Result<()> {
    let mut cfg = out.cfg.clone();
    let w = cfg.lattice.well_width;
    cfg.ensemble.well_widths = vec![w];
    let sweep = run_phase_sweep(&cfg)?;
    let min_sites = cfg.effective.min_sites;
    let mut rows = Vec::new();
    for b in sweep.simulated_boundary(w, cfg.ensemble.conductive_fraction) {
        rows.push(BoundaryRow {
            source: "simulation".into(),
            overlap: None,
            pump: b.pump,
            eta_critical: b.eta_critical,
        });
    }
    let mut overlaps = vec![None];
    overlaps.extend(cfg.effective.overlap_family.iter().map(|&g| Some(g)));
    for g in overlaps {
        for b in sweep.effective_boundary(w, g, min_sites)? {
            rows.push(BoundaryRow {
                source: if g.is_some() { "effective" } else { "effective_measured" }.into(),
                overlap: g.or_else(|| sweep.points.first().map(|pt| pt.nn_overlap)),
                pump: b.pump,
                eta_critical: b.eta_critical,
            });
        }
    }
    out.write("boundary.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_sweep_csv(out, "phase_map.csv", &sweep)
}

#[derive(Serialize)]
struct EnsembleSummaryRow {
    disorder: f64,
    eta: f64,
    mean_sigma: f64,
    ci_half_width: f64,
    mean_v_wf: f64,
    realizations: usize,
    failures: usize,
    status: &'static str,
}

const RAW: &str = "ensemble_raw.csv";

/// Realizations of a previous run of the same configuration in `dir`.
fn completed_realizations(dir: &Path, hash: &str) -> Result<Vec<Realization>> {
    let manifest = dir.join(MANIFEST);
    let raw = dir.join(RAW);
    if !manifest.exists() || !raw.exists() {
        return Ok(Vec::new());
    }
    let m = match Manifest::load(&manifest) {
        Ok(m) => m,
        Err(_) => return Ok(Vec::new()),
    };
    if m.command != CommandKind::Ensemble || m.config_hash != hash {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(raw)?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        match r {
            Ok(r) => out.push(r),
            // a run killed mid-write can leave a truncated last line
            Err(_) => break,
        }
    }
    Ok(out)
}

fn write_raw(path: &Path, realizations: &[&Realization]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut csv = csv::Writer::from_path(&tmp)?;
        for r in realizations {
            csv.serialize(r)?;
        }
        csv.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_ensemble(out: &mut Output) -> Result<()> {
    let completed = completed_realizations(&out.dir, &out.hash)?;
    out.manifest("running")?;
    let raw = out.path(RAW);
    // progress file: previous results first, then every finished point
    let mut written: Vec<Realization> = completed.clone();
    let mut seen: HashSet<(u64, u64, usize)> = written.iter().map(key).collect();
    write_raw(&raw, &written.iter().collect::<Vec<_>>())?;
    let ens = run_disorder_ensemble_with(&out.cfg, &completed, |pt| {
        for r in &pt.realizations {
            if seen.insert(key(r)) {
                written.push(r.clone());
            }
        }
        write_raw(&raw, &written.iter().collect::<Vec<_>>())
    })?;
    let ordered: Vec<&Realization> = ens.points.iter().flat_map(|p| &p.realizations).collect();
    write_raw(&raw, &ordered)?;
    out.record(RAW)?;
    write_ensemble_summary(out, &ens)
}

fn key(r: &Realization) -> (u64, u64, usize) {
    (r.disorder.to_bits(), r.eta.to_bits(), r.index)
}

fn write_ensemble_summary(out: &mut Output, ens: &DisorderEnsemble) -> Result<()> {
    out.write("ensemble_summary.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        for p in &ens.points {
            csv.serialize(EnsembleSummaryRow {
                disorder: p.disorder,
                eta: p.eta,
                mean_sigma: p.mean_sigma,
                ci_half_width: p.ci_half_width,
                mean_v_wf: p.mean_v_wf,
                realizations: p.realizations.len(),
                failures: p.failures,
                status: if p.failed { "failed" } else { "ok" },
            })?;
        }
        csv.flush()?;
        Ok(())
    })
}

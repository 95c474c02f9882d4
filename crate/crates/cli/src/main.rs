use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyecav::commands::{run_command, CommandKind, Manifest};
use dyecav::config::RunConfig;
use dyecav::Error;

/// Light transport in a dye-filled multimode microcavity.
#[derive(Parser)]
#[command(name = "dyecav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Potential and transverse eigenmodes.
    Modes(Common),
    /// Time evolution from the vacuum to the steady state.
    Evolve(Common),
    /// Wavefront speed over the (well width, pump, eta) grid.
    Sweep(Common),
    /// Disorder ensemble of localization widths.
    Ensemble(Common),
    /// Conductive/localized boundary from simulation and effective model.
    Boundary(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run config, or a manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Disorder seed; also the first ensemble seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Wavefront quantile.
    #[arg(long)]
    quantile: Option<f64>,
    /// Integration end time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NoConvergence { .. }
        | Error::StepLimit { .. }
        | Error::StiffnessFailure { .. }
        | Error::InvariantViolation { .. }
        | Error::Convergence(_) => EXIT_CONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

fn load_config(path: &Path, kind: CommandKind) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|x| x == "json") {
        let m = Manifest::from_json(&text).map_err(|e| Error::Config(format!("bad manifest: {e}")))?;
        if m.command != kind {
            return Err(Error::Config(format!(
                "manifest was written by `{}`, not `{}`",
                m.command.name(),
                kind.name()
            )));
        }
        return Ok(m.config);
    }
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve(kind: CommandKind, c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p, kind)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.lattice.seed = s;
        cfg.ensemble.seed_base = s;
    }
    if let Some(w) = c.workers {
        cfg.ensemble.workers = w;
    }
    if let Some(q) = c.quantile {
        cfg.observables.quantile = q;
    }
    if let Some(t) = c.t_final {
        cfg.dynamics.t_final = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: CommandKind, c: &Common) -> Result<(), Error> {
    let cfg = resolve(kind, c)?;
    if c.print_config {
        let text = toml::to_string_pretty(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    let m = run_command(kind, &cfg, &c.out)?;
    log::info!("{} finished in {:.1} s", kind.name(), m.wall_time_s);
    for name in m.outputs.keys() {
        println!("{}", c.out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::Modes(c) => (CommandKind::Modes, c),
        Command::Evolve(c) => (CommandKind::Evolve, c),
        Command::Sweep(c) => (CommandKind::Sweep, c),
        Command::Ensemble(c) => (CommandKind::Ensemble, c),
        Command::Boundary(c) => (CommandKind::Boundary, c),
    };
    match run(kind, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

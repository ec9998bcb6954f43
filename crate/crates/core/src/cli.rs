//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DVector, Matrix2};
use thiserror::Error;

use crate::casestudy;
use crate::control::{ControllerGains, Controller, Saturation, DEFAULT_Q_MAX};
use crate::equilibrium;
use crate::network::{parse_network, ReactionNetwork};
use crate::phs::InputVector;
use crate::report::{self, CheckReport};
use crate::sim::{self, SimConfig, SimMode};
use crate::thermo::ThermoState;
use crate::transform::{make_setpoint, Setpoint};

#[derive(Debug, Parser)]
#[command(name = "sidcstr", version, about = "Stochastic passivity-based control of a disturbed CSTR")]
pub struct Cli {
    /// Network configuration file; the built-in A ⇌ B reactor if omitted.
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the passivity conditions at one state.
    Check(CheckArgs),
    /// Tabulate steady states of the jacketed reactor.
    Equilibria(EquilibriaArgs),
    /// Run a seeded ensemble.
    Simulate(SimulateArgs),
    /// Reproduce the built-in case study end to end.
    Casestudy(CasestudyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SetpointArgs {
    #[arg(long)]
    pub t_star: Option<f64>,
    #[arg(long)]
    pub q_star: Option<f64>,
    /// Setpoint amounts, comma separated; solved from the mass balance if omitted.
    #[arg(long, value_delimiter = ',')]
    pub n_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct InitialArgs {
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub setpoint: SetpointArgs,
    #[command(flatten)]
    pub initial: InitialArgs,
    /// Report failures without a non-zero exit.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct EquilibriaArgs {
    #[arg(long, default_value_t = casestudy::Q_STAR)]
    pub q: f64,
    #[arg(long)]
    pub tw: Option<f64>,
    #[arg(long, default_value_t = 280.0)]
    pub tmin: f64,
    #[arg(long, default_value_t = 420.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = equilibrium::DEFAULT_GRID)]
    pub grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    ClosedLoop,
    OpenLoop,
    Deterministic,
    Isolated,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ClosedLoop => SimMode::ClosedLoop,
            ModeArg::OpenLoop => SimMode::OpenLoop,
            ModeArg::Deterministic => SimMode::Deterministic,
            ModeArg::Isolated => SimMode::Isolated,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "closed-loop")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 64)]
    pub n_traj: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Hold the open-loop inputs until this time, s.
    #[arg(long, default_value_t = 0.0)]
    pub open_loop_until: f64,
    /// Open-loop flow, m³/s; the setpoint flow if omitted.
    #[arg(long)]
    pub open_loop_q: Option<f64>,
    /// Open-loop heat flow, J/s; the setpoint heat flow if omitted.
    #[arg(long)]
    pub open_loop_qdot: Option<f64>,
    /// Upper flow limit, m³/s.
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    pub q_max: f64,
    /// Disable the flow limits.
    #[arg(long)]
    pub unclamped: bool,
    #[arg(long, default_value_t = 0.05)]
    pub terminal_eps: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub setpoint: SetpointArgs,
    #[command(flatten)]
    pub initial: InitialArgs,
    /// Gain matrix entries: `k1,k2` for a diagonal or `k11,k12,k21,k22`.
    #[arg(long, value_delimiter = ',')]
    pub gains: Option<Vec<f64>>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CasestudyArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0} condition(s) failed")]
    ConditionFailure(usize),
    #[error("{0} trajectory(ies) aborted")]
    SimulationAbort(usize),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 1,
            CliError::ConditionFailure(_) => 2,
            CliError::SimulationAbort(_) => 3,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn load_network(path: Option<&Path>) -> Result<ReactionNetwork, CliError> {
    match path {
        None => Ok(casestudy::network()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            parse_network(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

fn amounts(net: &ReactionNetwork, v: &[f64], flag: &str) -> Result<DVector<f64>, CliError> {
    if v.len() != net.n_species() {
        return Err(CliError::Input(format!(
            "--{flag} needs {} values, got {}",
            net.n_species(),
            v.len()
        )));
    }
    Ok(DVector::from_row_slice(v))
}

pub fn resolve_setpoint(net: &ReactionNetwork, a: &SetpointArgs) -> Result<Setpoint, CliError> {
    let t = a.t_star.unwrap_or(casestudy::T_STAR);
    let q = a.q_star.unwrap_or(casestudy::Q_STAR);
    match &a.n_star {
        Some(n) => Setpoint::from_composition(net, amounts(net, n, "n-star")?, t, q).map_err(input),
        None if a.t_star.is_none() && a.q_star.is_none() && net.n_species() == casestudy::N_STAR.len() => {
            Setpoint::from_composition(net, DVector::from_row_slice(&casestudy::N_STAR), t, q)
                .map_err(input)
        }
        None => make_setpoint(net, t, q).map_err(input),
    }
}

pub fn resolve_initial(net: &ReactionNetwork, a: &InitialArgs) -> Result<ThermoState, CliError> {
    let t = a.t0.unwrap_or(casestudy::T0);
    let n = match &a.n0 {
        Some(n) => amounts(net, n, "n0")?,
        None => amounts(net, &casestudy::N0, "n0")?,
    };
    ThermoState::from_temperature(net, n, t).map_err(input)
}

pub fn resolve_gains(v: Option<&[f64]>) -> Result<ControllerGains, CliError> {
    match v {
        None => Ok(casestudy::gains()),
        Some([k1, k2]) => ControllerGains::diagonal(*k1, *k2).map_err(input),
        Some([a, b, c, d]) => ControllerGains::new(Matrix2::new(*a, *b, *c, *d)).map_err(input),
        Some(other) => Err(CliError::Input(format!(
            "--gains needs 2 or 4 values, got {}",
            other.len()
        ))),
    }
}

fn sim_config(run: &RunArgs, seed: u64) -> Result<SimConfig, CliError> {
    let open_loop_input = match (run.open_loop_q, run.open_loop_qdot) {
        (None, None) => None,
        (q, qdot) => Some(InputVector::new(q.unwrap_or(casestudy::Q_STAR), qdot.unwrap_or(0.0))),
    };
    let cfg = SimConfig {
        dt: run.dt,
        t_end: run.t_end,
        seed,
        n_traj: run.n_traj,
        record_every: run.record_every,
        mode: run.mode.into(),
        open_loop_input,
        open_loop_until: run.open_loop_until,
        terminal_eps: run.terminal_eps,
    };
    cfg.validate().map_err(input)?;
    Ok(cfg)
}

fn write(out: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), content)?;
    Ok(())
}

fn cmd_check(net: &ReactionNetwork, out: &Path, a: &CheckArgs) -> Result<(), CliError> {
    let sp = resolve_setpoint(net, &a.setpoint)?;
    let state = resolve_initial(net, &a.initial)?;
    let rep = CheckReport::evaluate(net, &sp, &state);
    print!("{}", rep.human());
    write(out, "check.csv", &rep.csv())?;
    let failed = [rep.norm.holds, rep.theorem1.holds(), rep.theorem2.holds]
        .iter()
        .filter(|h| !**h)
        .count();
    if failed > 0 && !a.lenient {
        return Err(CliError::ConditionFailure(failed));
    }
    Ok(())
}

fn default_jacket(net: &ReactionNetwork, q: f64) -> Result<f64, CliError> {
    let sp = make_setpoint(net, casestudy::T_STAR, q).map_err(input)?;
    equilibrium::jacket_temperature_for(net, sp.t_star, q).map_err(input)
}

fn cmd_equilibria(net: &ReactionNetwork, out: &Path, a: &EquilibriaArgs) -> Result<(), CliError> {
    let tw = match a.tw {
        Some(tw) => tw,
        None => default_jacket(net, a.q)?,
    };
    let states =
        equilibrium::steady_states_with_grid(net, a.q, tw, (a.tmin, a.tmax), a.grid).map_err(input)?;
    for s in &states {
        println!(
            "T = {:.4} K  {}  max Re(lambda) = {:.4e}",
            s.t,
            s.classification,
            s.max_real_eigenvalue()
        );
    }
    if states.is_empty() {
        println!("no steady states in [{}, {}] K", a.tmin, a.tmax);
    }
    write(out, "equilibria.csv", &report::equilibria_csv(net, &states))
}

fn run_ensemble(
    net: &ReactionNetwork,
    ctl: &Controller,
    x0: &ThermoState,
    cfg: &SimConfig,
    out: &Path,
) -> Result<(), CliError> {
    let ens = sim::ensemble(net, ctl, x0, cfg).map_err(input)?;
    for t in &ens.trajectories {
        write(out, &format!("trajectory_{:03}.csv", t.index), &report::trajectory_csv(net, t))?;
    }
    write(out, "summary.csv", &report::summary_csv(&ens.stats))?;
    let s = &ens.stats;
    if let (Some(temp), Some(&t_end)) = (s.column("T"), s.times.last()) {
        println!(
            "t = {t_end} s  mean T = {:.4} K  std T = {:.4} K",
            temp.mean[temp.mean.len() - 1],
            temp.std[temp.std.len() - 1]
        );
    }
    println!(
        "stabilization probability {:.4} ({} completed, {} aborted)",
        s.stabilization_probability, s.n_completed, s.n_aborted
    );
    for t in ens.trajectories.iter().filter(|t| t.is_aborted()) {
        let a = t.abort.as_ref().expect("filtered on abort");
        eprintln!("trajectory {} aborted at step {}: {}", t.index, a.step, a.cause);
    }
    if s.n_aborted > 0 {
        return Err(CliError::SimulationAbort(s.n_aborted));
    }
    Ok(())
}

fn controller_for(sp: Setpoint, gains: ControllerGains, run: &RunArgs) -> Controller {
    let sat = if run.unclamped {
        Saturation::Unclamped
    } else {
        Saturation::Clamp { q_max: run.q_max }
    };
    Controller::new(sp, gains).with_saturation(sat)
}

fn cmd_simulate(net: &ReactionNetwork, out: &Path, seed: u64, a: &SimulateArgs) -> Result<(), CliError> {
    let sp = resolve_setpoint(net, &a.setpoint)?;
    let x0 = resolve_initial(net, &a.initial)?;
    let gains = resolve_gains(a.gains.as_deref())?;
    let cfg = sim_config(&a.run, seed)?;
    run_ensemble(net, &controller_for(sp, gains, &a.run), &x0, &cfg, out)
}

fn cmd_casestudy(out: &Path, seed: u64, a: &CasestudyArgs) -> Result<(), CliError> {
    let net = casestudy::network();
    let sp = casestudy::setpoint(&net);
    let x0 = casestudy::initial_state(&net);
    write(out, "network.cstr", &net.to_config_string())?;

    let rep = CheckReport::evaluate(&net, &sp, &x0);
    print!("{}", rep.human());
    write(out, "check.csv", &rep.csv())?;

    let tw = default_jacket(&net, casestudy::Q_STAR)?;
    let states = equilibrium::steady_states(&net, casestudy::Q_STAR, tw, (280.0, 420.0)).map_err(input)?;
    for s in &states {
        println!("steady state T = {:.4} K  {}", s.t, s.classification);
    }
    write(out, "equilibria.csv", &report::equilibria_csv(&net, &states))?;

    let cfg = sim_config(&a.run, seed)?;
    run_ensemble(&net, &controller_for(sp, casestudy::gains(), &a.run), &x0, &cfg, out)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Casestudy(a) => cmd_casestudy(&cli.out, cli.seed, a),
        cmd => {
            let net = load_network(cli.network.as_deref())?;
            match cmd {
                Command::Check(a) => cmd_check(&net, &cli.out, a),
                Command::Equilibria(a) => cmd_equilibria(&net, &cli.out, a),
                Command::Simulate(a) => cmd_simulate(&net, &cli.out, cli.seed, a),
                Command::Casestudy(_) => unreachable!(),
            }
        }
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

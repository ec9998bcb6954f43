//! Euler–Maruyama integration and seeded Monte Carlo ensembles.
//!
//! Each trajectory draws its Wiener increments from its own ChaCha8 stream,
//! selected by the trajectory index, so results do not depend on how the
//! ensemble is scheduled across threads.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::control::{ControlAction, ControlError, Controller};
use crate::network::{NoiseSpec, ReactionNetwork};
use crate::phs::{self, InputVector};
use crate::thermo::{ThermoError, ThermoState};
use crate::transform::{self, Setpoint};

/// Amounts are kept at or above this during integration, mol.
pub const N_FLOOR: f64 = 1e-9;
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimMode {
    /// Feedback law with all disturbances.
    #[default]
    ClosedLoop,
    /// Constant inputs with all disturbances.
    OpenLoop,
    /// Feedback law without disturbances.
    Deterministic,
    /// No exchange with the surroundings and no disturbances.
    Isolated,
}

impl SimMode {
    pub fn is_noisy(self) -> bool {
        matches!(self, Self::ClosedLoop | Self::OpenLoop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub record_every: usize,
    pub mode: SimMode,
    /// Constant inputs for open-loop operation; the setpoint inputs if absent.
    pub open_loop_input: Option<InputVector>,
    /// Closed-loop modes run open loop before this time, s.
    pub open_loop_until: f64,
    /// Radius of the terminal composition ball, mol.
    pub terminal_eps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
            seed: 42,
            n_traj: 1,
            record_every: 10,
            mode: SimMode::default(),
            open_loop_input: None,
            open_loop_until: 0.0,
            terminal_eps: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be > 0");
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return bad("t_end must be >= dt");
        }
        if self.n_traj == 0 {
            return bad("n_traj must be >= 1");
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1");
        }
        if !(self.terminal_eps >= 0.0) {
            return bad("terminal_eps must be >= 0");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("temperature stayed non-positive after {MAX_HALVINGS} step halvings")]
    TooManyHalvings,
    #[error("non-finite state")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Amount of a species clamped to the floor.
    FloorHit { species: usize },
    /// Flow clamped by the actuator limits.
    Saturated,
    /// Step split after a non-positive temperature, with the split depth.
    Halved { depth: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
}

/// How inputs are produced during a step.
#[derive(Debug, Clone, Copy)]
pub enum Drive<'a> {
    Feedback(&'a Controller),
    Fixed(InputVector),
}

impl Drive<'_> {
    fn action(&self, net: &ReactionNetwork, state: &ThermoState) -> Result<ControlAction, ControlError> {
        match self {
            Drive::Feedback(c) => c.action(net, state),
            Drive::Fixed(u) => Ok(ControlAction {
                q: u.q,
                qdot: u.qdot,
                t_w: crate::control::jacket_temperature(net, u.qdot, state.t).ok(),
                saturated: false,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ThermoState,
    pub events: Vec<EventKind>,
}

fn raw_step(
    net: &ReactionNetwork,
    drive: &Drive<'_>,
    state: &ThermoState,
    dt: f64,
    dw: &[f64; 3],
    events: &mut Vec<EventKind>,
) -> Result<DVector<f64>, SimError> {
    let action = drive.action(net, state)?;
    if action.saturated {
        events.push(EventKind::Saturated);
    }
    let f = phs::assemble(net, state, action.input()).fields;
    let mut x = state.to_vector() + f.drift * dt + f.diffusion * DVector::from_row_slice(dw);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite);
    }
    for j in 1..x.len() {
        if x[j] < N_FLOOR {
            x[j] = N_FLOOR;
            events.push(EventKind::FloorHit { species: j - 1 });
        }
    }
    Ok(x)
}

fn guarded_step(
    net: &ReactionNetwork,
    drive: &Drive<'_>,
    state: &ThermoState,
    dt: f64,
    dw: &[f64; 3],
    depth: u32,
    events: &mut Vec<EventKind>,
) -> Result<ThermoState, SimError> {
    let mut local = Vec::new();
    let x = raw_step(net, drive, state, dt, dw, &mut local)?;
    match ThermoState::from_vector(net, &x) {
        Ok(next) => {
            events.extend(local);
            Ok(next)
        }
        Err(ThermoError::NonPositiveTemperature(_)) => {
            if depth >= MAX_HALVINGS {
                return Err(SimError::TooManyHalvings);
            }
            events.push(EventKind::Halved { depth: depth + 1 });
            let half = [dw[0] * 0.5, dw[1] * 0.5, dw[2] * 0.5];
            let mid = guarded_step(net, drive, state, dt * 0.5, &half, depth + 1, events)?;
            guarded_step(net, drive, &mid, dt * 0.5, &half, depth + 1, events)
        }
        Err(e) => Err(e.into()),
    }
}

/// One Euler–Maruyama step with the domain guard.
pub fn step_em(
    net: &ReactionNetwork,
    drive: &Drive<'_>,
    state: &ThermoState,
    dt: f64,
    dw: &[f64; 3],
) -> Result<StepOutcome, SimError> {
    let mut events = Vec::new();
    let state = guarded_step(net, drive, state, dt, dw, 0, &mut events)?;
    Ok(StepOutcome { state, events })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: DVector<f64>,
    pub temperature: f64,
    pub entropy: f64,
    pub availability: f64,
    pub q: f64,
    pub qdot: f64,
    pub t_w: Option<f64>,
    /// Events since the previous record.
    pub events: Vec<EventKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub step: usize,
    pub cause: SimError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: usize,
    pub records: Vec<Record>,
    pub events: Vec<Event>,
    pub abort: Option<Abort>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("a trajectory always has its initial record")
    }

    pub fn is_aborted(&self) -> bool {
        self.abort.is_some()
    }
}

fn effective_network(net: &ReactionNetwork, mode: SimMode) -> ReactionNetwork {
    if mode.is_noisy() {
        net.clone()
    } else {
        net.with_noise(NoiseSpec::default())
    }
}

fn drive_at<'a>(controller: &'a Controller, cfg: &SimConfig, t: f64) -> Drive<'a> {
    let fixed = || Drive::Fixed(cfg.open_loop_input.unwrap_or(controller.setpoint.u_star));
    match cfg.mode {
        SimMode::Isolated => Drive::Fixed(InputVector::ZERO),
        SimMode::OpenLoop => fixed(),
        SimMode::ClosedLoop | SimMode::Deterministic if t < cfg.open_loop_until => fixed(),
        _ => Drive::Feedback(controller),
    }
}

fn record(
    net: &ReactionNetwork,
    sp: &Setpoint,
    drive: &Drive<'_>,
    state: &ThermoState,
    t: f64,
    events: Vec<EventKind>,
) -> Result<Record, SimError> {
    let action = drive.action(net, state)?;
    Ok(Record {
        t,
        x: state.to_vector(),
        temperature: state.t,
        entropy: state.s,
        availability: transform::availability(net, sp, state),
        q: action.q,
        qdot: action.qdot,
        t_w: action.t_w,
        events,
    })
}

/// Integrate one trajectory from `x0`.
pub fn simulate(
    net: &ReactionNetwork,
    controller: &Controller,
    x0: &ThermoState,
    cfg: &SimConfig,
    index: usize,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let net = effective_network(net, cfg.mode);
    let sp = &controller.setpoint;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let sqrt_dt = cfg.dt.sqrt();

    let mut traj = Trajectory {
        index,
        records: Vec::with_capacity(cfg.n_steps() / cfg.record_every + 2),
        events: Vec::new(),
        abort: None,
    };
    let mut state = x0.clone();
    let mut pending = Vec::new();
    traj.records
        .push(record(&net, sp, &drive_at(controller, cfg, 0.0), &state, 0.0, Vec::new())?);

    for step in 0..cfg.n_steps() {
        let t = step as f64 * cfg.dt;
        let dw = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ]
        .map(|z: f64| z * sqrt_dt);
        let drive = drive_at(controller, cfg, t);
        match step_em(&net, &drive, &state, cfg.dt, &dw) {
            Ok(out) => {
                for kind in &out.events {
                    traj.events.push(Event { step, kind: *kind });
                }
                pending.extend(out.events);
                state = out.state;
            }
            Err(cause) => {
                traj.abort = Some(Abort { step, cause });
                return Ok(traj);
            }
        }
        let done = step + 1;
        if done % cfg.record_every == 0 {
            let t_next = done as f64 * cfg.dt;
            let drive = drive_at(controller, cfg, t_next);
            match record(&net, sp, &drive, &state, t_next, std::mem::take(&mut pending)) {
                Ok(r) => traj.records.push(r),
                Err(cause) => {
                    traj.abort = Some(Abort { step: done, cause });
                    return Ok(traj);
                }
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// Column names, in the order of `series`.
    pub columns: Vec<String>,
    pub series: Vec<SeriesStats>,
    /// Fraction of trajectories ending inside the terminal composition ball.
    pub stabilization_probability: f64,
    /// `‖N(t_end) − N*‖` per completed trajectory.
    pub terminal_errors: Vec<f64>,
    pub n_completed: usize,
    pub n_aborted: usize,
}

impl EnsembleStats {
    pub fn column(&self, name: &str) -> Option<&SeriesStats> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| &self.series[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub stats: EnsembleStats,
}

/// Names of the recorded numeric columns.
pub fn record_columns(net: &ReactionNetwork) -> Vec<String> {
    let mut cols = vec!["U".to_string()];
    cols.extend(net.species.iter().map(|s| format!("N_{}", s.name)));
    cols.extend(["T", "S", "H_bar", "q", "Qdot", "T_w"].map(String::from));
    cols
}

/// Values of a record in the order of [`record_columns`].
pub fn record_values(r: &Record) -> Vec<f64> {
    let mut v: Vec<f64> = r.x.iter().copied().collect();
    v.extend([
        r.temperature,
        r.entropy,
        r.availability,
        r.q,
        r.qdot,
        r.t_w.unwrap_or(f64::NAN),
    ]);
    v
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn ensemble_stats(
    net: &ReactionNetwork,
    sp: &Setpoint,
    trajectories: &[Trajectory],
    terminal_eps: f64,
) -> EnsembleStats {
    let columns = record_columns(net);
    let done: Vec<&Trajectory> = trajectories.iter().filter(|t| !t.is_aborted()).collect();
    let times = done.first().map(|t| t.times()).unwrap_or_default();
    let n_rec = times.len();
    let n_col = columns.len();
    let values: Vec<Vec<Vec<f64>>> = done
        .iter()
        .map(|t| t.records.iter().map(record_values).collect())
        .collect();
    let series = (0..n_col)
        .map(|c| {
            let (mean, std) = (0..n_rec)
                .map(|r| mean_std(&values.iter().map(|tv| tv[r][c]).collect::<Vec<_>>()))
                .unzip();
            SeriesStats { mean, std }
        })
        .collect();
    let n_star = sp.n_star();
    let terminal_errors: Vec<f64> = done
        .iter()
        .map(|t| {
            let x = &t.last().x;
            (x.rows(1, x.len() - 1) - &n_star).norm()
        })
        .collect();
    let inside = terminal_errors.iter().filter(|&&e| e <= terminal_eps).count();
    let stabilization_probability = if done.is_empty() {
        0.0
    } else {
        inside as f64 / done.len() as f64
    };
    EnsembleStats {
        times,
        columns,
        series,
        stabilization_probability,
        terminal_errors,
        n_completed: done.len(),
        n_aborted: trajectories.len() - done.len(),
    }
}

/// Run `cfg.n_traj` trajectories in parallel and aggregate them.
pub fn ensemble(
    net: &ReactionNetwork,
    controller: &Controller,
    x0: &ThermoState,
    cfg: &SimConfig,
) -> Result<Ensemble, SimError> {
    cfg.validate()?;
    let trajectories = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| simulate(net, controller, x0, cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = ensemble_stats(net, &controller.setpoint, &trajectories, cfg.terminal_eps);
    Ok(Ensemble {
        trajectories,
        stats,
    })
}

fn scaled_deviation(sp: &Setpoint, x: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let scale = sp.x_star[i].abs();
        acc += ((x[i] - sp.x_star[i]) / scale).powi(2);
    }
    acc.sqrt()
}

/// Fraction of trajectories whose scaled deviation from `x*` stays below
/// `eps` over every record.
pub fn stability_estimate(trajs: &[Trajectory], sp: &Setpoint, eps: f64) -> f64 {
    stability_estimate_from(trajs, sp, eps, f64::NEG_INFINITY)
}

/// As [`stability_estimate`], over records at `t >= t_from` only.
pub fn stability_estimate_from(trajs: &[Trajectory], sp: &Setpoint, eps: f64, t_from: f64) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    let inside = trajs
        .iter()
        .filter(|t| {
            !t.is_aborted()
                && t.records
                    .iter()
                    .filter(|r| r.t >= t_from)
                    .map(|r| scaled_deviation(sp, &r.x))
                    .fold(0.0, f64::max)
                    < eps
        })
        .count();
    inside as f64 / trajs.len() as f64
}

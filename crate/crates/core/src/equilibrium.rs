//! Deterministic steady states of the open reactor.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::network::ReactionNetwork;
use crate::phs::{self, InputVector};
use crate::thermo::{self, ThermoError, ThermoState};

pub const DEFAULT_GRID: usize = 2000;
pub const MAX_NEWTON_ITERATIONS: usize = 200;
/// Bisection stops once the bracket is narrower than this, K.
pub const ROOT_TOLERANCE: f64 = 1e-6;
/// Spectral abscissae with magnitude below this classify as marginal.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;
const MASS_BALANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Unstable => "unstable",
            Self::Marginal => "marginal",
        }
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the inputs respond to the state during linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actuation {
    /// Both inputs frozen.
    Fixed(InputVector),
    /// Fixed flow, heat supplied through a jacket at `t_w` so `Q̇ = λ (T_w − T)`.
    Jacket { q: f64, t_w: f64 },
}

impl Actuation {
    pub fn input_at(&self, net: &ReactionNetwork, t: f64) -> InputVector {
        match *self {
            Self::Fixed(u) => u,
            Self::Jacket { q, t_w } => InputVector::new(q, net.reactor.lambda * (t_w - t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub t: f64,
    pub n: DVector<f64>,
    pub u: f64,
    pub q: f64,
    /// Heat flow that makes the energy balance stationary, J/s.
    pub qdot_required: f64,
    pub classification: Stability,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Drift residual scaled componentwise by `(|U|, N)`.
    pub residual: f64,
}

impl SteadyState {
    pub fn max_real_eigenvalue(&self) -> f64 {
        max_real(&self.eigenvalues)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("mass balance did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("steady composition has negative amount {value} for species {species}")]
    NegativeComposition { species: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Reaction rates times `V` as a function of composition at fixed `T`.
fn volumetric_rates(net: &ReactionNetwork, t: f64, n: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let v = net.reactor.volume;
    let r_gas = net.reactor.r_gas;
    let l = net.n_reactions();
    let mut f = DVector::zeros(l);
    let mut b = DVector::zeros(l);
    let power = |coeffs: &[u32]| -> f64 {
        coeffs
            .iter()
            .zip(n.iter())
            .filter(|(&z, _)| z > 0)
            .map(|(&z, &nj)| (nj.max(0.0) / v).powi(z as i32))
            .product()
    };
    for (i, r) in net.reactions.iter().enumerate() {
        f[i] = v * r.k0f * (-r.ef / (r_gas * t)).exp() * power(&r.reactants);
        b[i] = v * r.k0b * (-r.eb / (r_gas * t)).exp() * power(&r.products);
    }
    (f, b)
}

fn mass_balance(net: &ReactionNetwork, t: f64, q: f64, n: &DVector<f64>) -> (DVector<f64>, f64) {
    let v = net.reactor.volume;
    let (f, b) = volumetric_rates(net, t, n);
    let mut out = (net.inlet_concentration() - n / v) * q;
    let mut scale = (net.inlet_concentration() * q).amax().max((n * (q / v)).amax());
    for (i, r) in net.reactions.iter().enumerate() {
        out += r.stoich_difference() * (b[i] - f[i]);
        scale = scale.max(f[i]).max(b[i]);
    }
    (out, scale)
}

/// Relative residual of the steady mass balance at `(T, q, N)`.
pub fn mass_balance_residual(net: &ReactionNetwork, t: f64, q: f64, n: &DVector<f64>) -> f64 {
    let (res, scale) = mass_balance(net, t, q, n);
    if scale == 0.0 {
        res.amax()
    } else {
        res.amax() / scale
    }
}

fn is_first_order(net: &ReactionNetwork) -> bool {
    net.reactions.iter().all(|r| {
        r.reactants.iter().sum::<u32>() <= 1 && r.products.iter().sum::<u32>() <= 1
    })
}

fn check_nonnegative(n: DVector<f64>) -> Result<DVector<f64>, EquilibriumError> {
    let tol = 1e-12 * n.amax().max(1e-300);
    match n.iter().enumerate().find(|(_, &v)| v < -tol) {
        Some((species, &value)) => Err(EquilibriumError::NegativeComposition { species, value }),
        None => Ok(n.map(|v| v.max(0.0))),
    }
}

/// Steady composition of the open reactor at temperature `t` and flow `q`.
///
/// First-order networks are solved exactly; others by damped Newton from
/// `N = V c_in`. With `q = 0` the result is the reaction equilibrium reached
/// from an initial charge of `V c_in`.
pub fn mass_balance_steady(
    net: &ReactionNetwork,
    t: f64,
    q: f64,
) -> Result<DVector<f64>, EquilibriumError> {
    let guess = net.inlet_concentration() * net.reactor.volume;
    mass_balance_steady_from(net, t, q, &guess)
}

pub fn mass_balance_steady_from(
    net: &ReactionNetwork,
    t: f64,
    q: f64,
    guess: &DVector<f64>,
) -> Result<DVector<f64>, EquilibriumError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(EquilibriumError::InvalidArgument(format!("temperature {t} K")));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(EquilibriumError::InvalidArgument(format!("flow {q} m³/s")));
    }
    if q == 0.0 {
        return closed_equilibrium(net, t);
    }
    if is_first_order(net) {
        return linear_steady(net, t, q);
    }
    newton_steady(net, t, q, guess)
}

fn linear_steady(net: &ReactionNetwork, t: f64, q: f64) -> Result<DVector<f64>, EquilibriumError> {
    let p = net.n_species();
    let v = net.reactor.volume;
    // rates are affine in N; probe the zero state and unit vectors
    let zero = DVector::zeros(p);
    let (base, _) = mass_balance(net, t, q, &zero);
    let mut a = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut e = DVector::zeros(p);
        e[k] = v;
        let (col, _) = mass_balance(net, t, q, &e);
        a.set_column(k, &((col - &base) / v));
    }
    let n = a
        .lu()
        .solve(&(-base))
        .ok_or_else(|| EquilibriumError::InvalidArgument("singular mass balance".into()))?;
    check_nonnegative(n)
}

fn fd_jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(f: &F, x: &DVector<f64>, rel: f64) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), n);
    for k in 0..n {
        let h = rel * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        jac.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    jac
}

fn newton_steady(
    net: &ReactionNetwork,
    t: f64,
    q: f64,
    guess: &DVector<f64>,
) -> Result<DVector<f64>, EquilibriumError> {
    let residual = |n: &DVector<f64>| mass_balance(net, t, q, n).0;
    let mut n = guess.map(|v| v.max(0.0));
    let mut r = residual(&n);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if mass_balance_residual(net, t, q, &n) < MASS_BALANCE_TOLERANCE * 1e-2 {
            break;
        }
        let jac = fd_jacobian(&residual, &n, 1e-7);
        let Some(step) = jac.lu().solve(&(-&r)) else {
            return Err(EquilibriumError::NoConvergence(MAX_NEWTON_ITERATIONS));
        };
        let mut alpha = 1.0;
        loop {
            let trial = (&n + &step * alpha).map(|v| v.max(0.0));
            let rt = residual(&trial);
            if rt.norm() < r.norm() || alpha < 1e-10 {
                n = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
        }
    }
    if mass_balance_residual(net, t, q, &n) < MASS_BALANCE_TOLERANCE {
        check_nonnegative(n)
    } else {
        Err(EquilibriumError::NoConvergence(MAX_NEWTON_ITERATIONS))
    }
}

/// Reaction equilibrium of a closed charge `V c_in`, solved on the extents.
fn closed_equilibrium(net: &ReactionNetwork, t: f64) -> Result<DVector<f64>, EquilibriumError> {
    let n0 = net.inlet_concentration() * net.reactor.volume;
    let l = net.n_reactions();
    if l == 0 {
        return Ok(n0);
    }
    let dz: Vec<DVector<f64>> = net.reactions.iter().map(|r| r.stoich_difference()).collect();
    let amounts = |xi: &DVector<f64>| -> DVector<f64> {
        let mut n = n0.clone();
        for (i, d) in dz.iter().enumerate() {
            n -= d * xi[i];
        }
        n
    };
    let residual = |xi: &DVector<f64>| -> DVector<f64> {
        let (f, b) = volumetric_rates(net, t, &amounts(xi));
        f - b
    };
    let scaled = |xi: &DVector<f64>| -> f64 {
        let (f, b) = volumetric_rates(net, t, &amounts(xi));
        let s = f.amax().max(b.amax());
        if s == 0.0 {
            0.0
        } else {
            (f - b).amax() / s
        }
    };
    let feasible = |xi: &DVector<f64>| amounts(xi).iter().all(|&v| v >= 0.0);

    let mut xi = DVector::zeros(l);
    let mut r = residual(&xi);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if scaled(&xi) < MASS_BALANCE_TOLERANCE * 1e-2 {
            break;
        }
        let h = 1e-7 * n0.amax().max(1e-9);
        let mut jac = DMatrix::zeros(l, l);
        for k in 0..l {
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[k] += h;
            xm[k] -= h;
            jac.set_column(k, &((residual(&xp) - residual(&xm)) / (2.0 * h)));
        }
        let Some(step) = jac.lu().solve(&(-&r)) else {
            return Err(EquilibriumError::NoConvergence(MAX_NEWTON_ITERATIONS));
        };
        let mut alpha = 1.0;
        loop {
            let trial = &xi + &step * alpha;
            if feasible(&trial) {
                let rt = residual(&trial);
                if rt.norm() < r.norm() || alpha < 1e-12 {
                    xi = trial;
                    r = rt;
                    break;
                }
            } else if alpha < 1e-12 {
                return Err(EquilibriumError::NoConvergence(MAX_NEWTON_ITERATIONS));
            }
            alpha *= 0.5;
        }
    }
    if scaled(&xi) < MASS_BALANCE_TOLERANCE {
        check_nonnegative(amounts(&xi))
    } else {
        Err(EquilibriumError::NoConvergence(MAX_NEWTON_ITERATIONS))
    }
}

/// Heat flow that keeps `U` stationary at `(T, N)` under flow `q`.
pub fn required_heat_flow(net: &ReactionNetwork, n: &DVector<f64>, t: f64, q: f64) -> f64 {
    let u = thermo::internal_energy(net, n, t);
    -q * (phs::inlet_internal_energy(net) - u) / net.reactor.volume
}

/// Net heat balance `q (U_in − U)/V + λ (T_w − T)` along the steady mass balance.
pub fn energy_residual(net: &ReactionNetwork, t: f64, q: f64, t_w: f64) -> Result<f64, EquilibriumError> {
    let n = mass_balance_steady(net, t, q)?;
    Ok(energy_residual_at(net, &n, t, q, t_w))
}

fn energy_residual_at(net: &ReactionNetwork, n: &DVector<f64>, t: f64, q: f64, t_w: f64) -> f64 {
    -required_heat_flow(net, n, t, q) + net.reactor.lambda * (t_w - t)
}

/// Jacket temperature that makes `t` a steady temperature at flow `q`.
pub fn jacket_temperature_for(net: &ReactionNetwork, t: f64, q: f64) -> Result<f64, EquilibriumError> {
    let lambda = net.reactor.lambda;
    if lambda <= 0.0 {
        return Err(EquilibriumError::InvalidArgument(
            "jacket temperature needs lambda > 0".into(),
        ));
    }
    let n = mass_balance_steady(net, t, q)?;
    Ok(t + required_heat_flow(net, &n, t, q) / lambda)
}

/// Drift residual scaled componentwise by `(|U|, N)`.
pub fn scaled_drift_residual(net: &ReactionNetwork, state: &ThermoState, u: InputVector) -> f64 {
    let drift = phs::assemble(net, state, u).fields.drift;
    let mut acc = (drift[0] / state.u.abs().max(f64::MIN_POSITIVE)).powi(2);
    for j in 0..state.n.len() {
        acc += (drift[j + 1] / state.n[j]).powi(2);
    }
    acc.sqrt()
}

fn max_real(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Central finite-difference Jacobian of the deterministic drift.
pub fn drift_jacobian(
    net: &ReactionNetwork,
    x: &DVector<f64>,
    actuation: Actuation,
) -> Result<DMatrix<f64>, EquilibriumError> {
    let f = |x: &DVector<f64>| -> Result<DVector<f64>, EquilibriumError> {
        let s = ThermoState::from_vector(net, x)?;
        let u = actuation.input_at(net, s.t);
        Ok(phs::assemble(net, &s, u).fields.drift)
    };
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = 1e-6 * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        jac.set_column(k, &((f(&xp)? - f(&xm)?) / (2.0 * h)));
    }
    Ok(jac)
}

pub fn classify_eigenvalues(eigs: &[Complex<f64>]) -> Stability {
    let m = max_real(eigs);
    if m.abs() < MARGINAL_TOLERANCE {
        Stability::Marginal
    } else if m > 0.0 {
        Stability::Unstable
    } else {
        Stability::Stable
    }
}

/// Linear stability of the deterministic reactor at `x`.
pub fn classify(
    net: &ReactionNetwork,
    x: &DVector<f64>,
    actuation: Actuation,
) -> Result<(Stability, Vec<Complex<f64>>), EquilibriumError> {
    let jac = drift_jacobian(net, x, actuation)?;
    let eigs: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    Ok((classify_eigenvalues(&eigs), eigs))
}

fn steady_state_at(
    net: &ReactionNetwork,
    t: f64,
    q: f64,
    actuation: Actuation,
) -> Result<SteadyState, EquilibriumError> {
    let n = mass_balance_steady(net, t, q)?;
    let state = ThermoState::from_temperature(net, n.clone(), t)?;
    let qdot_required = required_heat_flow(net, &n, t, q);
    let residual = scaled_drift_residual(net, &state, InputVector::new(q, qdot_required));
    let (classification, eigenvalues) = classify(net, &state.to_vector(), actuation)?;
    Ok(SteadyState {
        t,
        u: state.u,
        n,
        q,
        qdot_required,
        classification,
        eigenvalues,
        residual,
    })
}

/// All steady temperatures in `t_range` for flow `q` and jacket temperature `t_w`.
pub fn steady_states(
    net: &ReactionNetwork,
    q: f64,
    t_w: f64,
    t_range: (f64, f64),
) -> Result<Vec<SteadyState>, EquilibriumError> {
    steady_states_with_grid(net, q, t_w, t_range, DEFAULT_GRID)
}

pub fn steady_states_with_grid(
    net: &ReactionNetwork,
    q: f64,
    t_w: f64,
    t_range: (f64, f64),
    grid: usize,
) -> Result<Vec<SteadyState>, EquilibriumError> {
    let (lo, hi) = t_range;
    if !(lo > 0.0) || !(hi > lo) || grid < 2 {
        return Err(EquilibriumError::InvalidArgument(format!(
            "temperature range [{lo}, {hi}] with {grid} points"
        )));
    }
    let actuation = Actuation::Jacket { q, t_w };
    let temps: Vec<f64> = (0..grid)
        .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
        .collect();

    if q == 0.0 && net.reactor.lambda == 0.0 {
        return temps
            .iter()
            .map(|&t| steady_state_at(net, t, q, actuation))
            .collect();
    }

    let residual = |t: f64| -> Option<f64> { energy_residual(net, t, q, t_w).ok() };
    let values: Vec<Option<f64>> = temps.iter().map(|&t| residual(t)).collect();
    let mut roots = Vec::new();
    for i in 0..grid - 1 {
        let (Some(e0), Some(e1)) = (values[i], values[i + 1]) else {
            continue;
        };
        if e0 == 0.0 {
            roots.push(temps[i]);
            continue;
        }
        if i == grid - 2 && e1 == 0.0 {
            roots.push(temps[i + 1]);
        }
        if e0.signum() * e1.signum() < 0.0 {
            let (mut a, mut b, mut ea) = (temps[i], temps[i + 1], e0);
            while b - a > ROOT_TOLERANCE {
                let m = 0.5 * (a + b);
                let Some(em) = residual(m) else { break };
                if em == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if em.signum() == ea.signum() {
                    a = m;
                    ea = em;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    roots
        .into_iter()
        .map(|t| steady_state_at(net, t, q, actuation))
        .collect()
}

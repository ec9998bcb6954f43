//! Ideal incompressible mixture thermodynamics.
//!
//! The state is `x = (U, N)` with `U` the internal energy (J) and `N` the
//! species amounts (mol); volume and pressure are fixed by the reactor.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::ReactionNetwork;

/// Amounts at or below this are outside the domain of the logarithmic terms.
pub const AMOUNT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("state vector has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("amount {value} of species {species} is not above {AMOUNT_FLOOR} mol")]
    AmountBelowFloor { species: usize, value: f64 },
    #[error("non-positive temperature {0} K")]
    NonPositiveTemperature(f64),
    #[error("non-finite state")]
    NonFinite,
}

/// Molar enthalpies `h_j(T) = Cp_j (T − T_ref) + h_ref_j`.
pub fn enthalpy(net: &ReactionNetwork, t: f64) -> DVector<f64> {
    let t_ref = net.reactor.t_ref;
    DVector::from_iterator(
        net.n_species(),
        net.species.iter().map(|s| s.cp * (t - t_ref) + s.h_ref),
    )
}

/// `U = Nᵀh(T) − P V`.
pub fn internal_energy(net: &ReactionNetwork, n: &DVector<f64>, t: f64) -> f64 {
    n.dot(&enthalpy(net, t)) - net.reactor.pressure * net.reactor.volume
}

/// Temperature from `(U, N)`; the inverse of [`internal_energy`].
pub fn temperature(net: &ReactionNetwork, u: f64, n: &DVector<f64>) -> Result<f64, ThermoError> {
    let rx = &net.reactor;
    let cp_tot = n.dot(&net.heat_capacities());
    let t = (u + rx.pressure * rx.volume - n.dot(&net.reference_enthalpies())) / cp_tot + rx.t_ref;
    if !t.is_finite() {
        Err(ThermoError::NonFinite)
    } else if t <= 0.0 {
        Err(ThermoError::NonPositiveTemperature(t))
    } else {
        Ok(t)
    }
}

fn check_amounts(n: &DVector<f64>) -> Result<(), ThermoError> {
    if n.iter().any(|v| !v.is_finite()) {
        return Err(ThermoError::NonFinite);
    }
    match n.iter().enumerate().find(|(_, &v)| v <= AMOUNT_FLOOR) {
        Some((species, &value)) => Err(ThermoError::AmountBelowFloor { species, value }),
        None => Ok(()),
    }
}

fn check_temperature(t: f64) -> Result<(), ThermoError> {
    if !t.is_finite() {
        Err(ThermoError::NonFinite)
    } else if t <= 0.0 {
        Err(ThermoError::NonPositiveTemperature(t))
    } else {
        Ok(())
    }
}

/// `μ_j / T = −Cp_j ln(T/T_ref) + R ln x_j − s_ref_j + h_j / T`.
pub fn chem_potential_over_t(
    net: &ReactionNetwork,
    n: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, ThermoError> {
    check_amounts(n)?;
    check_temperature(t)?;
    let r = net.reactor.r_gas;
    let ln_t = (t / net.reactor.t_ref).ln();
    let total = n.sum();
    let h = enthalpy(net, t);
    Ok(DVector::from_iterator(
        net.n_species(),
        net.species
            .iter()
            .enumerate()
            .map(|(j, s)| -s.cp * ln_t + r * (n[j] / total).ln() - s.s_ref + h[j] / t),
    ))
}

/// `S = Σ N_j [Cp_j ln(T/T_ref) + s_ref_j − R ln x_j]`.
pub fn entropy(net: &ReactionNetwork, n: &DVector<f64>, t: f64) -> Result<f64, ThermoError> {
    check_amounts(n)?;
    check_temperature(t)?;
    let r = net.reactor.r_gas;
    let ln_t = (t / net.reactor.t_ref).ln();
    let total = n.sum();
    Ok(net
        .species
        .iter()
        .enumerate()
        .map(|(j, s)| n[j] * (s.cp * ln_t + s.s_ref - r * (n[j] / total).ln()))
        .sum())
}

/// Entropy gradient `π = ∂S/∂x = (1/T, −μᵀ/T)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Costate(pub DVector<f64>);

impl Costate {
    pub fn inverse_temperature(&self) -> f64 {
        self.0[0]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Every intensive and extensive quantity derived from one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoState {
    pub u: f64,
    pub n: DVector<f64>,
    pub t: f64,
    /// Molar enthalpies at `t`.
    pub h: DVector<f64>,
    pub mu_over_t: DVector<f64>,
    pub s: f64,
    /// `T² NᵀCp`.
    pub theta: f64,
}

impl ThermoState {
    pub fn new(net: &ReactionNetwork, u: f64, n: DVector<f64>) -> Result<Self, ThermoError> {
        if n.len() != net.n_species() {
            return Err(ThermoError::Dimension {
                expected: net.n_species(),
                found: n.len(),
            });
        }
        if !u.is_finite() {
            return Err(ThermoError::NonFinite);
        }
        check_amounts(&n)?;
        let t = temperature(net, u, &n)?;
        let h = enthalpy(net, t);
        let mu_over_t = chem_potential_over_t(net, &n, t)?;
        let s = entropy(net, &n, t)?;
        let theta = t * t * n.dot(&net.heat_capacities());
        Ok(Self {
            u,
            n,
            t,
            h,
            mu_over_t,
            s,
            theta,
        })
    }

    pub fn from_temperature(
        net: &ReactionNetwork,
        n: DVector<f64>,
        t: f64,
    ) -> Result<Self, ThermoError> {
        if n.len() != net.n_species() {
            return Err(ThermoError::Dimension {
                expected: net.n_species(),
                found: n.len(),
            });
        }
        let u = internal_energy(net, &n, t);
        Self::new(net, u, n)
    }

    /// Build from `x = (U, N)`.
    pub fn from_vector(net: &ReactionNetwork, x: &DVector<f64>) -> Result<Self, ThermoError> {
        if x.len() != net.n_species() + 1 {
            return Err(ThermoError::Dimension {
                expected: net.n_species() + 1,
                found: x.len(),
            });
        }
        Self::new(net, x[0], x.rows(1, x.len() - 1).into_owned())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.n.len() + 1);
        x[0] = self.u;
        x.rows_mut(1, self.n.len()).copy_from(&self.n);
        x
    }

    pub fn total_amount(&self) -> f64 {
        self.n.sum()
    }

    pub fn concentrations(&self, net: &ReactionNetwork) -> DVector<f64> {
        &self.n / net.reactor.volume
    }

    pub fn costate(&self) -> Costate {
        Costate(-neg_entropy_gradient(self))
    }
}

/// `∇(−S)` at `state`.
pub fn neg_entropy_gradient(state: &ThermoState) -> DVector<f64> {
    let p = state.n.len();
    let mut g = DVector::zeros(p + 1);
    g[0] = -1.0 / state.t;
    g.rows_mut(1, p).copy_from(&state.mu_over_t);
    g
}

/// Hessian of `−S`.
///
/// It is positive semi-definite with the null direction `(hᵀN, N)`, the
/// direction along which the state is only rescaled.
pub fn neg_entropy_hessian(net: &ReactionNetwork, state: &ThermoState) -> DMatrix<f64> {
    let p = state.n.len();
    let r = net.reactor.r_gas;
    let theta = state.theta;
    let n_tot = state.n.sum();
    let h = &state.h;
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m[(0, 0)] = 1.0 / theta;
    for j in 0..p {
        m[(0, j + 1)] = -h[j] / theta;
        m[(j + 1, 0)] = -h[j] / theta;
        for k in 0..p {
            let mut v = h[j] * h[k] / theta - r / n_tot;
            if j == k {
                v += r / state.n[j];
            }
            m[(j + 1, k + 1)] = v;
        }
    }
    m
}

//! Setpoints and the availability Hamiltonian.
//!
//! Shifting `−S` by its tangent plane at a setpoint `x*` gives
//!
//! ```text
//! Ā(x) = S(x*) − S(x) + π*ᵀ (x − x*),    π* = ∂S/∂x (x*)
//! ```
//!
//! which vanishes with its gradient at `x*`. The state and SDE fields are left
//! untouched; only the storage function and the port output change.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::equilibrium::{self, EquilibriumError};
use crate::network::ReactionNetwork;
use crate::phs::{self, InputVector, ScalarField};
use crate::thermo::{self, Costate, ThermoError, ThermoState};

/// Largest scaled drift residual accepted for a solved setpoint.
pub const SETPOINT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("setpoint is not steady: scaled drift residual {0:e}")]
    NotSteady(f64),
    #[error("invalid setpoint argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setpoint {
    /// `(U*, N*)`.
    pub x_star: DVector<f64>,
    pub t_star: f64,
    /// `∂S/∂x` at `x*`.
    pub pi_star: Costate,
    pub v_star: f64,
    /// Nominal inputs `(q*, Q̇*)`.
    pub u_star: InputVector,
    pub s_star: f64,
    /// Scaled deterministic drift at `(x*, u*)`.
    pub steady_residual: f64,
}

impl Setpoint {
    /// Setpoint at a given composition and temperature, without requiring it
    /// to be steady. `Q̇*` balances the energy equation; the residual of the
    /// mass balance is recorded in `steady_residual`.
    pub fn from_composition(
        net: &ReactionNetwork,
        n_star: DVector<f64>,
        t_star: f64,
        q_star: f64,
    ) -> Result<Self, TransformError> {
        if !(q_star >= 0.0) || !q_star.is_finite() {
            return Err(TransformError::InvalidArgument(format!("q* = {q_star}")));
        }
        let state = ThermoState::from_temperature(net, n_star, t_star)?;
        let qdot = equilibrium::required_heat_flow(net, &state.n, t_star, q_star);
        let u_star = InputVector::new(q_star, qdot);
        let steady_residual = equilibrium::scaled_drift_residual(net, &state, u_star);
        Ok(Self {
            x_star: state.to_vector(),
            t_star,
            pi_star: state.costate(),
            v_star: net.reactor.volume,
            u_star,
            s_star: state.s,
            steady_residual,
        })
    }

    pub fn energy_star(&self) -> f64 {
        self.x_star[0]
    }

    pub fn n_star(&self) -> DVector<f64> {
        self.x_star.rows(1, self.x_star.len() - 1).into_owned()
    }

    pub fn state(&self, net: &ReactionNetwork) -> Result<ThermoState, ThermoError> {
        ThermoState::from_vector(net, &self.x_star)
    }
}

/// Steady state of the open reactor at `(T*, q*)`.
pub fn make_setpoint(net: &ReactionNetwork, t_star: f64, q_star: f64) -> Result<Setpoint, TransformError> {
    if !(t_star > 0.0) {
        return Err(TransformError::InvalidArgument(format!("T* = {t_star}")));
    }
    let n = equilibrium::mass_balance_steady(net, t_star, q_star)?;
    let sp = Setpoint::from_composition(net, n, t_star, q_star)?;
    if sp.steady_residual < SETPOINT_TOLERANCE {
        Ok(sp)
    } else {
        Err(TransformError::NotSteady(sp.steady_residual))
    }
}

/// The availability function of a setpoint as a storage function.
#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    pub setpoint: Setpoint,
}

impl Availability {
    pub fn new(setpoint: Setpoint) -> Self {
        Self { setpoint }
    }
}

impl ScalarField for Availability {
    fn value(&self, _net: &ReactionNetwork, state: &ThermoState) -> f64 {
        let sp = &self.setpoint;
        let dx = state.to_vector() - &sp.x_star;
        sp.s_star - state.s + sp.pi_star.as_vector().dot(&dx)
    }

    fn gradient(&self, _net: &ReactionNetwork, state: &ThermoState) -> DVector<f64> {
        thermo::neg_entropy_gradient(state) + self.setpoint.pi_star.as_vector()
    }

    fn hessian(&self, net: &ReactionNetwork, state: &ThermoState) -> DMatrix<f64> {
        thermo::neg_entropy_hessian(net, state)
    }
}

pub fn availability(net: &ReactionNetwork, sp: &Setpoint, state: &ThermoState) -> f64 {
    Availability::new(sp.clone()).value(net, state)
}

/// `∇Ā = (1/T* − 1/T, μ/T − μ*/T*)`.
pub fn availability_gradient(sp: &Setpoint, state: &ThermoState) -> DVector<f64> {
    thermo::neg_entropy_gradient(state) + sp.pi_star.as_vector()
}

/// `ȳ = gᵀ ∇Ā + δ u`.
pub fn transformed_output(
    net: &ReactionNetwork,
    sp: &Setpoint,
    state: &ThermoState,
    u: InputVector,
) -> DVector<f64> {
    let eval = phs::assemble(net, state, u).eval;
    phs::output(&eval, &availability_gradient(sp, state), u)
}

/// `‖R π*‖`, the gap between `(J − R)∇(−S)` and `(J − R)∇Ā`.
pub fn equivalence_residual(net: &ReactionNetwork, sp: &Setpoint, state: &ThermoState) -> f64 {
    (phs::damping_matrix(net, state) * sp.pi_star.as_vector()).norm()
}

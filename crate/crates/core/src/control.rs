//! Passivity-based output feedback on the availability port.
//!
//! ```text
//! ū = −(I + K δ̄)⁻¹ K ḡᵀ ∇Ā
//! ```
//!
//! which solves `ū = −K ȳ` for the transformed output `ȳ = ḡᵀ∇Ā + δ̄ū`.

use nalgebra::{DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::network::ReactionNetwork;
use crate::phs::{self, InputVector, SdeFields};
use crate::thermo::ThermoState;
use crate::transform::{self, Setpoint};

pub const DEFAULT_Q_MAX: f64 = 1e-2;
const SINGULAR_DET: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("gain matrix must be symmetric positive definite")]
    InvalidGains,
    #[error("I + K δ̄ is singular (det = {0:e})")]
    Singular(f64),
    #[error("jacket temperature is undefined for lambda = 0")]
    NoHeatTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    k: Matrix2<f64>,
}

impl ControllerGains {
    pub fn new(k: Matrix2<f64>) -> Result<Self, ControlError> {
        let symmetric = k[(0, 1)] == k[(1, 0)];
        let finite = k.iter().all(|v| v.is_finite());
        // Sylvester's criterion
        let pd = k[(0, 0)] > 0.0 && k.determinant() > 0.0;
        if symmetric && finite && pd {
            Ok(Self { k })
        } else {
            Err(ControlError::InvalidGains)
        }
    }

    pub fn diagonal(k1: f64, k2: f64) -> Result<Self, ControlError> {
        Self::new(Matrix2::new(k1, 0.0, 0.0, k2))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    /// Keep the flow in `[0, q_max]`.
    Clamp { q_max: f64 },
    Unclamped,
}

impl Default for Saturation {
    fn default() -> Self {
        Self::Clamp {
            q_max: DEFAULT_Q_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlAction {
    pub q: f64,
    pub qdot: f64,
    /// Jacket temperature realizing `qdot`, when the reactor has a jacket.
    pub t_w: Option<f64>,
    pub saturated: bool,
}

impl ControlAction {
    pub fn input(&self) -> InputVector {
        InputVector::new(self.q, self.qdot)
    }
}

fn inverse2(m: &Matrix2<f64>) -> Result<Matrix2<f64>, ControlError> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det.abs() < SINGULAR_DET || !det.is_finite() {
        return Err(ControlError::Singular(det));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Unsaturated feedback input at `state`.
pub fn control_law(
    net: &ReactionNetwork,
    sp: &Setpoint,
    gains: &ControllerGains,
    state: &ThermoState,
) -> Result<InputVector, ControlError> {
    let eval = phs::assemble(net, state, InputVector::ZERO).eval;
    let grad = transform::availability_gradient(sp, state);
    let gtg: DVector<f64> = eval.g.transpose() * grad;
    let k = gains.k;
    let inv = inverse2(&(Matrix2::identity() + k * eval.delta))?;
    let u = -(inv * k * Vector2::new(gtg[0], gtg[1]));
    Ok(InputVector::new(u[0], u[1]))
}

/// `T_w = Q̇/λ + T`.
pub fn jacket_temperature(net: &ReactionNetwork, qdot: f64, t: f64) -> Result<f64, ControlError> {
    let lambda = net.reactor.lambda;
    if lambda <= 0.0 {
        return Err(ControlError::NoHeatTransfer);
    }
    Ok(qdot / lambda + t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub setpoint: Setpoint,
    pub gains: ControllerGains,
    pub saturation: Saturation,
}

impl Controller {
    pub fn new(setpoint: Setpoint, gains: ControllerGains) -> Self {
        Self {
            setpoint,
            gains,
            saturation: Saturation::default(),
        }
    }

    pub fn with_saturation(mut self, saturation: Saturation) -> Self {
        self.saturation = saturation;
        self
    }

    pub fn action(&self, net: &ReactionNetwork, state: &ThermoState) -> Result<ControlAction, ControlError> {
        let u = control_law(net, &self.setpoint, &self.gains, state)?;
        let (q, saturated) = match self.saturation {
            Saturation::Clamp { q_max } => {
                let c = u.q.clamp(0.0, q_max);
                (c, c != u.q)
            }
            Saturation::Unclamped => (u.q, false),
        };
        let t_w = jacket_temperature(net, u.qdot, state.t).ok();
        Ok(ControlAction {
            q,
            qdot: u.qdot,
            t_w,
            saturated,
        })
    }

    /// Drift and diffusion with the feedback substituted for the inputs.
    pub fn closed_loop_fields(
        &self,
        net: &ReactionNetwork,
        state: &ThermoState,
    ) -> Result<(SdeFields, ControlAction), ControlError> {
        let action = self.action(net, state)?;
        Ok((phs::assemble(net, state, action.input()).fields, action))
    }
}

/// Closed-loop SDE fields under the unsaturated law.
pub fn closed_loop_drift(
    net: &ReactionNetwork,
    sp: &Setpoint,
    gains: &ControllerGains,
    state: &ThermoState,
) -> Result<SdeFields, ControlError> {
    let u = control_law(net, sp, gains, state)?;
    Ok(phs::assemble(net, state, u).fields)
}

//! The reversible `A ⇌ B` reactor fed with pure `A`.

use nalgebra::DVector;

use crate::control::{Controller, ControllerGains};
use crate::network::{parse_network, ReactionNetwork};
use crate::thermo::ThermoState;
use crate::transform::Setpoint;

pub const CONFIG: &str = include_str!("../data/ab_case_study.cstr");

pub const T_STAR: f64 = 331.9;
pub const N_STAR: [f64; 2] = [1.3, 0.7];
pub const U_STAR: f64 = 1157.5;
pub const Q_STAR: f64 = 9.15e-6;
pub const T0: f64 = 342.0;
pub const N0: [f64; 2] = [1.0, 1.0];
pub const Q0: f64 = 9.15e-4;
pub const TW0: f64 = 299.97;
pub const K1: f64 = 1.64e-7;
pub const K2: f64 = 27430.0;

pub fn network() -> ReactionNetwork {
    parse_network(CONFIG).expect("built-in case study configuration is valid")
}

/// Setpoint at the tabulated composition and temperature.
pub fn setpoint(net: &ReactionNetwork) -> Setpoint {
    Setpoint::from_composition(net, DVector::from_row_slice(&N_STAR), T_STAR, Q_STAR)
        .expect("tabulated setpoint is in the thermodynamic domain")
}

pub fn initial_state(net: &ReactionNetwork) -> ThermoState {
    ThermoState::from_temperature(net, DVector::from_row_slice(&N0), T0)
        .expect("tabulated initial state is in the thermodynamic domain")
}

pub fn gains() -> ControllerGains {
    ControllerGains::diagonal(K1, K2).expect("tabulated gains are positive")
}

pub fn controller(net: &ReactionNetwork) -> Controller {
    Controller::new(setpoint(net), gains())
}

//! Stochastic port-Hamiltonian modelling and passivity-based stabilization of
//! continuous stirred tank reactors whose state and inputs are both disturbed.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: the declarative reaction-network/reactor configuration.
//! - [`thermo`]: ideal incompressible mixture thermodynamics, entropy and its
//!   derivatives.
//! - [`phs`]: structure matrices of the disturbed port-Hamiltonian model,
//!   infinitesimal generator, passivity checks and feedback interconnection.
//! - [`transform`]: setpoints and the availability Hamiltonian.
//! - [`control`]: the passivity-based output feedback law.
//! - [`equilibrium`]: steady states of the open reactor and their stability.
//! - [`sim`]: Euler–Maruyama integration and seeded Monte Carlo ensembles.
//! - [`report`] and [`cli`]: CSV emission and the command-line front end.
//!
//! ```
//! use sidcstr::{casestudy, thermo};
//!
//! let net = casestudy::network();
//! let n = nalgebra::DVector::from_vec(vec![1.3, 0.7]);
//! let u = thermo::internal_energy(&net, &n, 331.9);
//! assert!((u - 1157.5).abs() < 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod casestudy;
pub mod cli;
pub mod control;
pub mod equilibrium;
pub mod linalg;
pub mod network;
pub mod phs;
pub mod report;
pub mod sim;
pub mod thermo;
pub mod transform;

pub use control::{ControlAction, Controller, ControllerGains, Saturation};
pub use network::{ReactionNetwork, Species};
pub use phs::{InputVector, ScalarField};
pub use thermo::ThermoState;
pub use transform::Setpoint;

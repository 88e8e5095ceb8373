//! Rigid-link cable models: dynamics, simulation, parameter identification,
//! curve fitting and tip servoing.

pub mod config;
pub mod curve;
pub mod dynamics;
pub mod error;
pub mod ident;
pub mod io;
pub mod kinematics;
pub mod linalg;
pub mod model;
pub mod registry;
pub mod report;
pub mod servo;
pub mod sim;
pub mod validation;

pub use error::{Error, Result};

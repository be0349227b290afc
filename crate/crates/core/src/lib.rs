//! Limit cycles with sliding in piecewise-smooth systems: event-driven integration,
//! variational and adjoint equations across boundary events, phase and shape sensitivity.

pub mod config;
pub mod cycle;
pub mod error;
pub mod experiments;
pub mod export;
pub mod figures;
pub mod hybrid;
pub mod models;
pub mod ode;
pub mod phase;
pub mod sensitivity;
pub mod system;

pub use error::{Error, Result};

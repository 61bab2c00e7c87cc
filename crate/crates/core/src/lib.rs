//! Simulation engine for a multi-period transferable-permits market with strategic
//! sellers, endogenous technology adoption and an optional per-permit price support
//! paid to firms running the low-emitting technology.

pub mod adoption;
pub mod config;
pub mod emissions;
pub mod error;
pub mod market;
pub mod risk;
pub mod scenario;
pub mod simulator;

pub use config::{
    EconomyParams, EconomyPath, FirmParams, ModelOptions, ModelParams, PolicyParams, Shock, Tech,
    TechnologyVector,
};
pub use error::{Error, Result};

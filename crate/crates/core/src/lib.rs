//! Stochastic DC optimal power flow with post-contingency network
//! reconfiguration.

pub mod economics;
pub mod formulation;
pub mod net_model;
pub mod solver;
pub mod verifier;

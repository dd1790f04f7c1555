//! Selection bias in hazard differences under unobserved effect modification.
//!
//! The structural model gives each individual a frailty `U0` and an effect
//! modifier `U1`; the hazard under treatment `a` is
//! `f0(t, U0) + a * U1 * m(t)`. Survivors of the treated world are a selected
//! subpopulation, so the observed hazard difference drifts away from the
//! causal one. The crate provides closed forms for that drift, a Monte Carlo
//! simulator, the Aalen additive hazard estimator and a command-line front
//! end.

pub mod aalen;
pub mod cli;
pub mod closedform;
pub mod curve;
pub mod model;
pub mod simulator;
pub mod stochastics;

//! Persistent monitoring of a target network by a fleet of mobile sensing
//! agents.
//!
//! Every target carries a scalar linear state estimated by a Kalman-Bucy
//! filter whose error covariance grows while the target is unobserved and
//! shrinks while an agent dwells at it. Agents are driven by distributed,
//! event-driven receding horizon controllers ([`controllers`]) whose
//! subproblems are solved in closed form plus projected gradient descent
//! ([`rhcp`]), optionally accelerated by a learned next-visit classifier
//! ([`learning`]). The [`simulator`] runs the whole system exactly between
//! events and reports the global metrics.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod covariance;
pub mod learning;
pub mod network;
pub mod rhcp;
pub mod simulator;


pub use covariance::Dynamics;
pub use network::{generate_pc, NetworkGraph, PlanningHorizon, ProblemConfig, TargetParams};

pub use controllers::{controller_by_name, Controller, ControllerOptions, CONTROLLER_NAMES};
pub use simulator::{run, SimOptions, SimOutput, Summary};

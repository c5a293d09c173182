//! NODA: a Hamiltonian-inspired world model (auto-encoder + neural ODE)
//! with a model-based RL training loop, analytic reference environments,
//! and empirical verification of Lipschitz transition/value error bounds.

pub mod cli;
pub mod diffcore;
pub mod error;
pub mod nn;
pub mod odeint;
pub mod rng;

pub use error::{NodaError, Result};

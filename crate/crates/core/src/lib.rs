//! Simulation and numerical verification of stochastic Allen–Cahn equations
//! with dynamic boundary conditions on a periodic strip.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod noise;
pub mod operator;
pub mod potentials;
pub mod solver;

pub use error::{Error, Result};

//! Geometric variational flows for curves, surfaces and level sets.

pub mod beltrami;
pub mod chanvese;
pub mod curve;
pub mod error;
pub mod fixtures;
pub mod gac;
pub mod grid;
pub mod io;
pub mod pnm;
pub mod runner;
pub mod trace;
pub mod variation;

pub use error::{Error, ProbeSide, Result};

//! Precise Laplace asymptotics for the two-dimensional generalised parabolic
//! Anderson model on the unit torus.
//!
//! The pipeline solves the skeleton control problem, builds the Taylor
//! hierarchy of the shifted renormalised equation, assembles the expansion
//! coefficients and compares the truncated expansion against Monte Carlo
//! estimates of the Laplace functional.

pub mod combinatorics;
pub mod error;
pub mod estimators;
pub mod functional;
pub mod io;
pub mod minimizer;
pub mod noise;
pub mod nonlinearity;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod taylor;

pub use error::{Error, Result};

//! Extremal almost-Kähler metrics on the flat 4-torus.
//!
//! Spectral exterior calculus on a periodic `n⁴` grid, compatible
//! almost-complex structures, hermitian curvature, the elliptic operator on
//! primitive 2-forms with kernel tracking, almost-Kähler potentials and a
//! Newton–Krylov continuation solver for constant hermitian scalar curvature.

pub mod checks;
pub mod config;
pub mod curvature;
pub mod deformation;
pub mod elliptic;
pub mod error;
pub mod forms;
pub mod grid;
pub mod io;
pub mod samples;
pub mod solver;
pub mod structures;

pub use error::{Error, Result};

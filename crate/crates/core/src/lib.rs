//! Nonunitary Newtonian self-gravity of a uniform matter ball.
//!
//! The physical body and its hidden gravitational partner form a two-body
//! meta-system. Its wavefunction separates into a freely spreading center
//! of meta-mass Gaussian and a relative-motion factor bound by the mutual
//! potential of two interpenetrating balls. This crate propagates the
//! relative factor, traces out the hidden partner and measures how far the
//! resulting physical density matrix has localized.
//!
//! Pipeline stages, bottom-up:
//!
//! - [`units`]: constants, the validated [`PhysicalSetup`] and closed-form scales.
//! - [`potential`]: the interpenetrating-ball potential and its harmonic limit.
//! - [`solver`]: norm-preserving Crank–Nicolson propagation of `u(r) = r·χ(r)`.
//! - [`cm`]: the analytic center of meta-mass factor and the free control.
//! - [`densmat`]: reconstruction of the meta-wavefunction and the partial trace.
//! - [`analysis`]: double-Gaussian fit, purity and entropies.
//! - [`pipeline`]: end-to-end runs and the scaling check.
//! - [`io`]: the text file formats shared with the command line tool.

pub mod analysis;
pub mod cm;
pub mod densmat;
mod error;
pub mod io;
pub mod pipeline;
pub mod potential;
pub mod solver;
pub mod tridiag;
pub mod units;

pub use error::{Error, Result};
pub use units::{Constants, PhysicalSetup, CGS};

pub use num_complex::Complex64;

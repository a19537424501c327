//! Numerical laboratory for the classical limit of Bohmian mechanics in one
//! dimension.
//!
//! The crate evolves wave functions on a periodic grid, integrates Bohmian
//! trajectory ensembles guided by them, and measures how far those
//! trajectories are from classical Newtonian motion on the macroscopic scales
//! set by the de Broglie wavelength and the scale of variation of the
//! potential.
//!
//! Module map:
//!
//! - [`field`]: grid, wave function, polar form, kinetic energy
//! - [`spectral`], [`interp`]: FFT calculus and off-grid interpolation
//! - [`potential`], [`propagator`]: potential library and split-step evolution
//! - [`bohm`]: guidance velocity, equilibrium sampling, trajectory ensembles
//! - [`quantum`]: quantum potential and force, classicality scales, deviation `D`
//! - [`localplane`]: local wave vector, packet decomposition, stationary phase
//! - [`environment`]: effective collapse onto separated components
//! - [`experiments`]: scenarios, classical reference paths, caustics, sweeps
//! - [`config`]: run configuration files and the run-directory writer

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bohm;
pub mod classical;
pub mod config;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod field;
pub mod interp;
pub mod localplane;
pub mod potential;
pub mod propagator;
pub mod quantum;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use field::{Grid, Units, WaveField};
pub use potential::{PotentialKind, PotentialSpec};
pub use propagator::StepPlan;

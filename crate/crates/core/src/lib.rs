//! Deterministic numerical solver and verification suite for the
//! relativistic quantum Boltzmann (Uehling-Uhlenbeck) equation for a single
//! species of bosons or fermions.
//!
//! The crate provides:
//!
//! * on-shell relativistic collision kinematics in the center-of-momentum
//!   parametrization ([`kinematics`]);
//! * Bose-Einstein / Fermi-Dirac global equilibria and moment matching
//!   ([`equilibrium`]);
//! * discrete evaluation of the quartic collision operator, its gain/loss
//!   split and moment residuals ([`collision`]);
//! * the linearized operator `L = nu + K1 - K2`, the quadratic and cubic
//!   remainder terms, the macro-micro projection and spectral checks
//!   ([`linearized`]);
//! * an independent oracle for the Bessel-reduced kernel integral and its
//!   closed-form bounds ([`reduced`]);
//! * a positivity- and saturation-preserving exponential time integrator
//!   with optional torus transport ([`solver`]);
//! * moments, entropy, norms and decay-rate fitting ([`diagnostics`]);
//! * the command-line surface, config grammar and deterministic output
//!   formats ([`config`], [`snapshot`], [`csvio`], [`cli`]).

pub mod cli;
pub mod collision;
pub mod config;
pub mod csvio;
pub mod diagnostics;
pub mod eigen;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod kinematics;
pub mod linearized;
pub mod reduced;
pub mod snapshot;
pub mod solver;

pub use equilibrium::{EquilibriumParams, StatisticsKind};
pub use grid::{AngularQuadrature, MomentumGrid};
pub use kinematics::FourMomentum;

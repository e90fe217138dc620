//! Constrained-Hamiltonian engine for a point charge coupled to the
//! electromagnetic field.
//!
//! The crate discretizes the Poincare-gauge Lagrangian on an origin-centered
//! grid, derives canonical momenta in two ways, runs the Dirac-Bergmann
//! constraint chain, builds Dirac brackets, assembles the minimal-coupling and
//! multipolar (PZW) Hamiltonians, and integrates Hamilton's equations.

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod gauges;
pub mod grid;
pub mod hamiltonians;
pub mod helmholtz;
pub mod lagrangian;
pub mod model;
pub mod phase_space;
pub mod potential;
pub mod report;
pub mod vec3;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, VectorField};
pub use phase_space::{FieldState, Functional, ParticleState, PhaseGradient};

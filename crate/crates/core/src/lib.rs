//! Impurity resonances of a two-dimensional electron in crossed magnetic and
//! electric fields, and the quantum vortices of their wavefunctions.
//!
//! All quantities are in scaled units: energies in half cyclotron quanta,
//! so Landau levels sit at odd integers, and lengths in magnetic-length
//! units. See [`units`] for the conversion.

// Quadrature nodes and series coefficients are written with more digits than an f64 holds.
#![allow(clippy::excessive_precision)]

pub mod error;
pub mod green;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod solver;
pub mod special;
pub mod units;
pub mod vortex;

pub use error::{Error, Result};
pub use green::{
    d_and_derivative, d_derivative, d_value, g0, g0_gradient, g_full, overlap_norm, psi, psi_gradient,
    OverlapGrid, ResonanceFunction, WavefunctionKind,
};
pub use model::{landau_level, ComplexEnergy, ModelParams, Point2, Window};
pub use quadrature::{integrate_deformed, integrate_segment, ContourSpec, QuadResult};
pub use units::{PhysicalScales, Quantity};
pub use solver::{
    find_stabilization, refine_root, refine_root_with, seed_guesses, sweep_field, Resonance, SolverOptions,
    Stabilization, StepControl, Trajectory,
};
pub use vortex::{
    circulation, current_at, locate_vortices, phase_at, phase_map, track_vortices, velocity_at, Circulation,
    CirculationMethod, FieldGrid, GaugePotential, GradMode, PhaseMap, State, Vortex, VortexOptions, VortexPath,
};

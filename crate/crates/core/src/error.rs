use num_complex::Complex64;
use thiserror::Error;

use crate::model::Point2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("s = {s} lies within the guard radius of the pole at {k}\u{3c0}")]
    PoleProximity { s: Complex64, k: i64 },

    #[error("integrand exponent real part {real_part:.3} exceeds the overflow bound {bound}")]
    ExponentOverflow { real_part: f64, bound: f64 },

    #[error("quadrature did not converge after {panels} panels (error {error:.3e}, target {target:.3e})")]
    NonConvergence { panels: usize, error: f64, target: f64 },

    #[error("integrand tail has not decayed by t = {bound} (tail estimate {tail:.3e})")]
    TailNotDecaying { bound: f64, tail: f64 },

    #[error("free Green's function diverges at coincident points {0:?}")]
    CoincidentPoints(Point2),

    #[error("wavefunction is singular at the impurity (r = {0:?})")]
    OriginSingularity(Point2),

    #[error("energy {0} is a Landau level pole of the zero-field Green's function")]
    LandauPole(Complex64),

    #[error("|D(E)| = {magnitude:.3e} at E = {energy}: too close to a resonance pole")]
    ResonancePole { energy: Complex64, magnitude: f64 },

    #[error("root refinement from {guess} did not converge in {iterations} iterations (|D| = {residual:.3e})")]
    RootNotConverged { guess: Complex64, iterations: usize, residual: f64 },

    #[error("degenerate resonance at {energy}: second root within {distance:.3e}")]
    DegenerateRoot { energy: Complex64, distance: f64 },

    #[error("continuation lost track at field {field} (minimum step {min_step} reached)")]
    LostTrack { field: f64, min_step: f64 },

    #[error("no interior minimum of |Im E| in field bracket [{lo}, {hi}]")]
    NoMinimumInBracket { lo: f64, hi: f64 },

    #[error("minimum of |Im E| sits at the bracket edge {edge}")]
    MinimumAtBracketEdge { edge: f64 },

    #[error("contour vertex spacing too coarse: phase step {step:.3} rad between vertices {index} and {next}")]
    UndersampledContour { step: f64, index: usize, next: usize },

    #[error("contour passes within {distance:.3e} of a singular point")]
    GuardViolation { distance: f64 },

    #[error("velocity undefined: |psi|^2 = {density:.3e} at {point:?} lies below the floor")]
    VortexProximity { point: Point2, density: f64 },

    #[error("phase undefined for psi = 0")]
    ZeroPhase,

    #[error("vortex cluster near {0:?} is unresolved (|charge| >= 2)")]
    UnresolvedCluster(Point2),

    #[error("vortex track lost at field {field}: {reason}")]
    TrackLost { field: f64, reason: String },

    #[error("integration window too small: boundary tail {tail:.3e} exceeds tolerance {tol:.3e}")]
    WindowTooSmall { tail: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

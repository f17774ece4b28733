//! Dimensionless model parameters and small geometric types.
//!
//! Energies are measured in units of half the cyclotron energy, so the
//! Landau levels sit at `2n + 1`. Lengths are in units of the inverse
//! square root of `m* omega`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Complex scaled energy. Resonances carry `im <= 0`.
pub type ComplexEnergy = Complex64;

/// Electric field strength and impurity binding energy, both scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub field: f64,
    pub binding_energy: f64,
}

impl ModelParams {
    pub fn new(field: f64, binding_energy: f64) -> Result<Self> {
        let params = Self {
            field,
            binding_energy,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.field.is_finite() || self.field < 0.0 {
            return Err(invalid("field", format!("must be finite and >= 0, got {}", self.field)));
        }
        if !self.binding_energy.is_finite() || self.binding_energy >= 0.0 {
            return Err(invalid(
                "binding_energy",
                format!("must be finite and < 0, got {}", self.binding_energy),
            ));
        }
        Ok(())
    }

    pub fn with_field(self, field: f64) -> Self {
        Self { field, ..self }
    }
}

/// Energy of Landau level `n` in scaled units.
pub fn landau_level(n: u32) -> f64 {
    2.0 * f64::from(n) + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Mirror image across the x axis.
    pub fn mirrored(self) -> Self {
        Self::new(self.x, -self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle in scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let w = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn square(half_width: f64) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            y_min: -half_width,
            y_max: half_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(invalid("window", format!("degenerate rectangle {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x_min: self.x_min * factor,
            x_max: self.x_max * factor,
            y_min: self.y_min * factor,
            y_max: self.y_max * factor,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

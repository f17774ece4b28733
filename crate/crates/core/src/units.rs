//! Conversion between physical quantities and the scaled model units.
//!
//! With hbar = 1 and cyclotron frequency `omega = |e| B / m*`, energies scale
//! by `2 / omega`, field strengths by `|e| / sqrt(m* omega^3)` and lengths by
//! `sqrt(m* omega)`. Any consistent unit system with hbar = 1 works.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScales {
    pub effective_mass: f64,
    pub magnetic_field: f64,
    /// Magnitude of the carrier charge.
    pub charge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    Energy(f64),
    Field(f64),
    Length(f64),
}

impl Quantity {
    pub fn value(self) -> f64 {
        match self {
            Quantity::Energy(v) | Quantity::Field(v) | Quantity::Length(v) => v,
        }
    }
}

impl PhysicalScales {
    pub fn new(effective_mass: f64, magnetic_field: f64, charge: f64) -> Result<Self> {
        for (name, v) in [
            ("effective_mass", effective_mass),
            ("magnetic_field", magnetic_field),
            ("charge", charge),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(Self {
            effective_mass,
            magnetic_field,
            charge,
        })
    }

    pub fn cyclotron_frequency(&self) -> f64 {
        self.charge * self.magnetic_field / self.effective_mass
    }

    fn factor(&self, q: Quantity) -> f64 {
        let omega = self.cyclotron_frequency();
        let m = self.effective_mass;
        match q {
            Quantity::Energy(_) => 2.0 / omega,
            Quantity::Field(_) => self.charge / (m * omega.powi(3)).sqrt(),
            Quantity::Length(_) => (m * omega).sqrt(),
        }
    }

    pub fn to_scaled(&self, q: Quantity) -> f64 {
        q.value() * self.factor(q)
    }

    /// Inverse of [`to_scaled`](Self::to_scaled); the variant names the kind
    /// of the scaled value.
    pub fn from_scaled(&self, q: Quantity) -> f64 {
        q.value() / self.factor(q)
    }
}

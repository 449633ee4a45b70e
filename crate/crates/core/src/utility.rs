use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Constant-relative-risk-aversion utility `u(c) = (c^a − 1)/a` with exponent `a ∈ (0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crra {
    exponent: f64,
}

impl Crra {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(Error::Config(format!(
                "CRRA exponent must lie in (0,1), got {exponent}"
            )));
        }
        Ok(Crra { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn value(&self, c: f64) -> f64 {
        (c.powf(self.exponent) - 1.0) / self.exponent
    }

    pub fn marginal(&self, c: f64) -> f64 {
        c.powf(self.exponent - 1.0)
    }

    pub fn curvature(&self, c: f64) -> f64 {
        (self.exponent - 1.0) * c.powf(self.exponent - 2.0)
    }
}

impl Default for Crra {
    fn default() -> Self {
        Crra { exponent: 0.5 }
    }
}

//! Two-mode telegraph model with constant per-mode rates and affine fields.
//!
//! Because the intensity and kernel ignore the continuous coordinate, the
//! mode process is an autonomous two-state Markov chain with a closed-form
//! terminal law, and the flows are solvable exactly. That makes the model the
//! analytic oracle for the thinning construction and the estimators.

use crate::error::{invalid, Result};
use crate::pdp::Model;

/// Affine scalar field `a + b * nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineField {
    pub offset: f64,
    pub slope: f64,
}

impl AffineField {
    pub fn eval(&self, nu: f64) -> f64 {
        self.offset + self.slope * nu
    }

    /// Closed-form flow of `d nu / dt = a + b nu`.
    pub fn flow(&self, nu: f64, dt: f64) -> f64 {
        if self.slope == 0.0 {
            nu + self.offset * dt
        } else {
            let shift = self.offset / self.slope;
            (nu + shift) * (self.slope * dt).exp() - shift
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelegraphParams {
    /// Jump rate in each mode.
    pub rates: [f64; 2],
    pub fields: [AffineField; 2],
}

impl Default for TelegraphParams {
    fn default() -> Self {
        TelegraphParams {
            rates: [1.0, 2.0],
            fields: [
                AffineField { offset: 2.0, slope: -0.5 },
                AffineField { offset: -3.0, slope: -0.5 },
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TelegraphModel {
    pub params: TelegraphParams,
}

impl TelegraphModel {
    pub fn new(params: TelegraphParams) -> Result<Self> {
        if params.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(invalid("telegraph rates must be positive"));
        }
        Ok(TelegraphModel { params })
    }
}

impl Model for TelegraphModel {
    fn mode_count(&self) -> usize {
        2
    }

    fn drift(&self, theta: usize, nu: f64) -> f64 {
        self.params.fields[theta].eval(nu)
    }

    fn intensity(&self, theta: usize, _nu: f64) -> f64 {
        self.params.rates[theta]
    }

    fn kernel_row(&self, theta: usize, _nu: f64, row: &mut [f64]) {
        row[theta] = 0.0;
        row[1 - theta] = 1.0;
    }

    fn exact_flow(&self, theta: usize, nu: f64, dt: f64) -> Option<f64> {
        Some(self.params.fields[theta].flow(nu, dt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_flow_matches_field() {
        let f = AffineField { offset: 2.0, slope: -0.5 };
        // derivative at 0 equals the field
        let h = 1e-7;
        let d = (f.flow(3.0, h) - 3.0) / h;
        assert!((d - f.eval(3.0)).abs() < 1e-5);
        // constant-slope case
        let c = AffineField { offset: 1.5, slope: 0.0 };
        assert_eq!(c.flow(2.0, 3.0), 6.5);
    }

    #[test]
    fn rejects_nonpositive_rates() {
        let mut p = TelegraphParams::default();
        p.rates[1] = 0.0;
        assert!(TelegraphModel::new(p).is_err());
    }
}

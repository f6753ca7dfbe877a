use serde::Serialize;

use crate::error::{domain, Result};

/// Samples of a function on a uniform grid `x_i = x0 + i dx`, with the
/// Dirichlet values it is pinned to outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarField1D {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub time: f64,
    pub left: f64,
    pub right: f64,
}

impl ScalarField1D {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>, time: f64, left: f64, right: f64) -> Self {
        Self {
            x0,
            dx,
            values,
            time,
            left,
            right,
        }
    }

    /// Samples `f` at `n` nodes starting from `x0`.
    pub fn from_fn(x0: f64, dx: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|i| f(x0 + i as f64 * dx)).collect();
        Self::new(x0, dx, values, 0.0, 0.0, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn x_end(&self) -> f64 {
        self.x(self.len().saturating_sub(1))
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        crate::quad::trapezoid(&sq, self.dx).sqrt()
    }

    /// Checks the CDF invariants: values in `[0, 1]` and non-decreasing, both
    /// up to the given tolerances.
    pub fn validate_cdf(&self, range_tol: f64, monotone_tol: f64) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| !(**v >= -range_tol && **v <= 1.0 + range_tol)) {
            return domain(format!("CDF value {v} outside [0, 1]"));
        }
        if let Some(i) = (1..self.len()).find(|&i| self.values[i] < self.values[i - 1] - monotone_tol) {
            return domain(format!("CDF decreases at x = {}", self.x(i)));
        }
        Ok(())
    }
}

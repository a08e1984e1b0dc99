//! Analytic test fields with known curvature.

use super::ScoreOracle;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm};

/// `s ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroScore {
    pub dim: usize,
}

impl ScoreOracle for ZeroScore {
    fn dim(&self) -> usize {
        self.dim
    }
    fn score(&self, _x: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn supports_jvp(&self) -> bool {
        true
    }
    fn score_vjp(&self, _x: &[f64], _t: f64, _w: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
}

/// A score that does not depend on `x` or `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantScore {
    pub value: Vec<f64>,
}

impl ScoreOracle for ConstantScore {
    fn dim(&self) -> usize {
        self.value.len()
    }
    fn score(&self, _x: &[f64], _t: f64) -> Vec<f64> {
        self.value.clone()
    }
    fn supports_jvp(&self) -> bool {
        true
    }
    fn score_vjp(&self, _x: &[f64], _t: f64, _w: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.value.len()])
    }
}

/// A field whose noise prediction `ε = -t·s` is constant, so the ODE drift is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantNoise {
    pub noise: Vec<f64>,
}

impl ScoreOracle for ConstantNoise {
    fn dim(&self) -> usize {
        self.noise.len()
    }
    fn score(&self, _x: &[f64], t: f64) -> Vec<f64> {
        self.noise.iter().map(|e| -e / t).collect()
    }
}

/// `s(x) = -½(xᵀAx)·u` for symmetric positive definite `A` and unit `u`, so that
/// `‖s(x)‖ = ½xᵀAx` has gradient `Ax` and Hessian `A` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNormField {
    a: Vec<Vec<f64>>,
    axis: Vec<f64>,
}

impl QuadraticNormField {
    pub fn new(a: Vec<Vec<f64>>, axis: Vec<f64>) -> Result<Self> {
        let d = a.len();
        check_dim(d, axis.len())?;
        for (i, row) in a.iter().enumerate() {
            check_dim(d, row.len())?;
            for j in 0..i {
                if (row[j] - a[j][i]).abs() > 1e-12 * (1.0 + row[j].abs()) {
                    return Err(Error::invalid("a", "matrix must be symmetric"));
                }
            }
        }
        if (norm(&axis) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("axis", "axis must be a unit vector"));
        }
        Ok(Self { a, axis })
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|row| dot(row, x)).collect()
    }
}

impl ScoreOracle for QuadraticNormField {
    fn dim(&self) -> usize {
        self.axis.len()
    }
    fn score(&self, x: &[f64], _t: f64) -> Vec<f64> {
        let q = 0.5 * dot(x, &self.apply(x));
        self.axis.iter().map(|u| -q * u).collect()
    }
    fn supports_jvp(&self) -> bool {
        true
    }
    fn score_vjp(&self, x: &[f64], _t: f64, w: &[f64]) -> Option<Vec<f64>> {
        // J = -u (Ax)ᵀ
        let k = -dot(&self.axis, w);
        Some(self.apply(x).into_iter().map(|v| k * v).collect())
    }
}

//! Proximal subproblem `argmin_y f_t(y) + ‖y - x‖² / (2Δt)` and its one-step gradient
//! approximation.
//!
//! The minimizer satisfies `y = x - Δt ∇f_t(y) = x + Δt s_t(y)`, solved here by plain
//! fixed-point iteration seeded at `x`. The iteration contracts when `Δt·L < 1`, where `L`
//! bounds the Lipschitz constant of `∇f_t` near `x`; choosing such a step is up to the caller.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_time, Error, Result};
use crate::gmm::GaussianMixture;
use crate::linalg::{axpy, dist_sq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxOutcome {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn prox_step(gmm: &GaussianMixture, x: &[f64], t: f64, step: f64, opts: ProxOptions) -> Result<ProxOutcome> {
    check_dim(gmm.dim(), x.len())?;
    check_time(t)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid("step", format!("{step} is not a positive finite number")));
    }
    let mut y = x.to_vec();
    let mut residual = f64::INFINITY;
    for k in 1..=opts.max_iter {
        let next = axpy(x, step, &gmm.score_unchecked(&y, t));
        residual = dist_sq(&next, &y).sqrt();
        y = next;
        if residual <= opts.tol {
            return Ok(ProxOutcome { point: y, iterations: k, residual });
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual })
}

/// `x - Δt ∇f_t(x)`, the explicit step that the prox update reduces to when `∇f_t(y*)` is
/// replaced by `∇f_t(x)`.
pub fn gradient_step(gmm: &GaussianMixture, x: &[f64], t: f64, step: f64) -> Result<Vec<f64>> {
    let s = gmm.score_t(x, t)?;
    Ok(axpy(x, step, &s))
}

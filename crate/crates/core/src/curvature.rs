//! Curvature-change index and worst-case perturbation directions.
//!
//! With `v = d/t = -s` the drift magnitude is `‖v‖ = ‖s‖`, so everything here works on the
//! score norm. `H(x) = ‖∇‖v‖(x+δ) - ∇‖v‖(x)‖` with `δ` a radius-`ρ` step along `∇‖v‖(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add, axpy, norm, norm_inf, scale, sub, unit_basis};
use crate::oracle::ScoreOracle;

/// Gradients with a smaller norm are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

const FD_REL_STEP: f64 = 1e-4;
const HVP_REL_STEP: f64 = 1e-3;
const POWER_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientPath {
    /// Analytic when the oracle supports it, finite differences otherwise.
    #[default]
    Auto,
    FiniteDifference,
}

/// `∇_x ‖v(x)‖`, or the zero vector where `‖v‖ < 1e-12`.
pub fn score_norm_grad<O: ScoreOracle + ?Sized>(oracle: &O, x: &[f64], t: f64) -> Vec<f64> {
    score_norm_grad_with(oracle, x, t, GradientPath::Auto)
}

pub fn score_norm_grad_with<O: ScoreOracle + ?Sized>(oracle: &O, x: &[f64], t: f64, path: GradientPath) -> Vec<f64> {
    let s = oracle.score(x, t);
    let n = norm(&s);
    if n < DEGENERATE_NORM {
        return vec![0.0; x.len()];
    }
    if path == GradientPath::Auto && oracle.supports_jvp() {
        if let Some(g) = oracle.score_vjp(x, t, &s) {
            return scale(&g, 1.0 / n);
        }
    }
    let h = FD_REL_STEP * (1.0 + norm_inf(x));
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = norm(&oracle.score(&probe, t));
            probe[j] = x[j] - h;
            let down = norm(&oracle.score(&probe, t));
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub h_value: f64,
    pub rho: f64,
    pub delta: Vec<f64>,
    pub grad_at_x: Vec<f64>,
    pub grad_at_probe: Vec<f64>,
    /// `∇‖v‖(x)` vanished, so no probing direction exists and `H` is reported as 0.
    pub degenerate: bool,
}

impl ProbeResult {
    pub fn grad_norm_at_x(&self) -> f64 {
        norm(&self.grad_at_x)
    }

    pub fn grad_norm_at_probe(&self) -> f64 {
        norm(&self.grad_at_probe)
    }
}

pub fn curvature_index<O: ScoreOracle + ?Sized>(oracle: &O, x: &[f64], t: f64, rho: f64) -> ProbeResult {
    let g = score_norm_grad(oracle, x, t);
    let gn = norm(&g);
    if gn < DEGENERATE_NORM {
        return ProbeResult {
            h_value: 0.0,
            rho,
            delta: scale(&unit_basis(x.len(), 0), rho),
            grad_at_probe: g.clone(),
            grad_at_x: g,
            degenerate: true,
        };
    }
    let delta = scale(&g, rho / gn);
    let g_probe = score_norm_grad(oracle, &add(x, &delta), t);
    ProbeResult {
        h_value: norm(&sub(&g_probe, &g)),
        rho,
        delta,
        grad_at_x: g,
        grad_at_probe: g_probe,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaObjective {
    /// Ascend the potential `f_t(x+δ)`; its gradient is `-s(x+δ)`.
    Sharpness,
    /// Ascend the drift magnitude `‖s(x+δ)‖`.
    Curvature,
}

pub fn find_delta_sas<O: ScoreOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    t: f64,
    rho: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    find_delta(oracle, x, t, rho, steps, DeltaObjective::Sharpness)
}

pub fn find_delta_cas<O: ScoreOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    t: f64,
    rho: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    find_delta(oracle, x, t, rho, steps, DeltaObjective::Curvature)
}

/// Radius-`ρ` perturbation ascending `objective`.
///
/// The first iterate is the normalized gradient at `x` scaled to `ρ`. Each further iterate
/// (up to `steps` in total) moves `ρ/steps` along the normalized gradient at `x+δ` and is
/// projected back onto the sphere `‖δ‖ = ρ`.
pub fn find_delta<O: ScoreOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    t: f64,
    rho: f64,
    steps: usize,
    objective: DeltaObjective,
) -> Result<Vec<f64>> {
    let grad = |p: &[f64]| match objective {
        DeltaObjective::Sharpness => scale(&oracle.score(p, t), -1.0),
        DeltaObjective::Curvature => score_norm_grad(oracle, p, t),
    };
    let g0 = grad(x);
    let n0 = norm(&g0);
    if n0 < DEGENERATE_NORM {
        return Err(Error::DegenerateGradient(n0));
    }
    let mut delta = scale(&g0, rho / n0);
    let lr = rho / steps.max(1) as f64;
    for _ in 1..steps {
        let g = grad(&add(x, &delta));
        let n = norm(&g);
        if n < DEGENERATE_NORM {
            break;
        }
        let moved = axpy(&delta, lr / n, &g);
        delta = scale(&moved, rho / norm(&moved));
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerIteration {
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest-magnitude eigenvalue of the Hessian of `‖v‖` at `x`, by power iteration on
/// finite-difference Hessian-vector products.
pub fn hessian_lambda_max<O: ScoreOracle + ?Sized>(oracle: &O, x: &[f64], t: f64, iters: usize) -> PowerIteration {
    let h = HVP_REL_STEP * (1.0 + norm_inf(x));
    let hvp = |u: &[f64]| {
        let up = score_norm_grad(oracle, &axpy(x, h, u), t);
        let down = score_norm_grad(oracle, &axpy(x, -h, u), t);
        scale(&sub(&up, &down), 0.5 / h)
    };
    // fixed, irregular start so no coordinate direction is privileged
    let start: Vec<f64> = (0..x.len()).map(|j| 0.5 + ((j as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let mut u = scale(&start, 1.0 / norm(&start));
    let mut lambda = 0.0;
    for k in 1..=iters {
        let w = hvp(&u);
        let next = norm(&w);
        if next == 0.0 {
            return PowerIteration { lambda: 0.0, iterations: k, converged: true };
        }
        let change = (next - lambda).abs();
        lambda = next;
        u = scale(&w, 1.0 / next);
        if k > 1 && change < POWER_REL_TOL * lambda {
            return PowerIteration { lambda, iterations: k, converged: true };
        }
    }
    PowerIteration { lambda, iterations: iters, converged: false }
}

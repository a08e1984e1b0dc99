//! Decreasing noise-level grids `t_0 > t_1 > … > t_N = 0`. Step `i` moves from `t_i` to `t_{i+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const DEFAULT_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSchedule {
    times: Vec<f64>,
}

impl TimeSchedule {
    /// Accepts any strictly decreasing, non-negative grid ending at 0 with at least one step.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("times", "a schedule needs at least two levels"));
        }
        if times.last() != Some(&0.0) {
            return Err(Error::invalid("times", "the last level must be 0"));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("times", "levels must be finite and non-negative"));
        }
        if times.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("times", "levels must be strictly decreasing"));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.times[0]
    }

    /// Whether step `i` lies in the index window `a·N ≤ i < b·N`.
    pub fn in_window(&self, i: usize, window: [f64; 2]) -> bool {
        let n = self.n_steps() as f64;
        let i = i as f64;
        window[0] * n <= i && i < window[1] * n
    }
}

/// Geometric grid `t_i = σ_max (σ_min/σ_max)^(i/n)` for `i < n`, then `t_n = 0`.
///
/// The level `σ_min` itself would sit at `i = n` and is replaced by the terminal 0, so the
/// smallest positive level is `σ_max (σ_min/σ_max)^((n-1)/n)`.
pub fn make_schedule(n_steps: usize, sigma_min: f64, sigma_max: f64) -> Result<TimeSchedule> {
    if n_steps < 2 {
        return Err(Error::invalid("n_steps", format!("{n_steps} < 2")));
    }
    if !(sigma_min.is_finite() && sigma_min > 0.0 && sigma_max.is_finite() && sigma_max > sigma_min) {
        return Err(Error::invalid(
            "sigma range",
            format!("need 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"),
        ));
    }
    let ratio = sigma_min / sigma_max;
    let n = n_steps as f64;
    let mut times: Vec<f64> = (0..n_steps).map(|i| sigma_max * ratio.powf(i as f64 / n)).collect();
    times.push(0.0);
    TimeSchedule::new(times)
}

/// Serialized form `{"n_steps", "sigma_min", "sigma_max"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub n_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl ScheduleSpec {
    /// Default grid for a mixture of base scale `σ0`: 40 steps from `80·σ0` down to 0.002.
    pub fn for_base_scale(base_scale: f64) -> Self {
        Self { n_steps: DEFAULT_STEPS, sigma_min: DEFAULT_SIGMA_MIN, sigma_max: 80.0 * base_scale }
    }

    pub fn build(&self) -> Result<TimeSchedule> {
        make_schedule(self.n_steps, self.sigma_min, self.sigma_max)
    }
}

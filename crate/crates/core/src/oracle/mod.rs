//! Score oracles and the three interchangeable parameterizations of a denoiser.
//!
//! For the variance-exploding process the score `s`, noise prediction `ε` and denoised
//! estimate `D` are tied by `-t·s = ε = (x - D)/t`. An oracle only has to provide the
//! score; [`OracleOutput`] derives the other two.

mod perturbed;
pub mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_positive_time, Result};
use crate::gmm::GaussianMixture;

pub use perturbed::{oracle_with_perturbation, Bump, PerturbationSpec, PerturbedOracle, SUPPORT_WIDTHS};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub denoised: Vec<f64>,
    pub score: Vec<f64>,
    pub noise_pred: Vec<f64>,
}

impl OracleOutput {
    pub fn from_score(x: &[f64], t: f64, score: Vec<f64>) -> Self {
        let t2 = t * t;
        let denoised = x.iter().zip(&score).map(|(xi, si)| xi + t2 * si).collect();
        let noise_pred = score.iter().map(|si| -t * si).collect();
        Self { denoised, score, noise_pred }
    }
}

pub trait ScoreOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Score at noise level `t`. Callers guarantee `x.len() == self.dim()` and `t > 0`.
    fn score(&self, x: &[f64], t: f64) -> Vec<f64>;

    /// Whether [`ScoreOracle::score_vjp`] returns analytic products.
    fn supports_jvp(&self) -> bool {
        false
    }

    /// `J(x)ᵀ w` for the score Jacobian `J`.
    fn score_vjp(&self, _x: &[f64], _t: f64, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn evaluate(&self, x: &[f64], t: f64) -> OracleOutput {
        OracleOutput::from_score(x, t, self.score(x, t))
    }
}

impl<O: ScoreOracle + ?Sized> ScoreOracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        (**self).score(x, t)
    }
    fn supports_jvp(&self) -> bool {
        (**self).supports_jvp()
    }
    fn score_vjp(&self, x: &[f64], t: f64, w: &[f64]) -> Option<Vec<f64>> {
        (**self).score_vjp(x, t, w)
    }
}

impl<O: ScoreOracle + ?Sized> ScoreOracle for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        (**self).score(x, t)
    }
    fn supports_jvp(&self) -> bool {
        (**self).supports_jvp()
    }
    fn score_vjp(&self, x: &[f64], t: f64, w: &[f64]) -> Option<Vec<f64>> {
        (**self).score_vjp(x, t, w)
    }
}

impl<O: ScoreOracle + ?Sized> ScoreOracle for Arc<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        (**self).score(x, t)
    }
    fn supports_jvp(&self) -> bool {
        (**self).supports_jvp()
    }
    fn score_vjp(&self, x: &[f64], t: f64, w: &[f64]) -> Option<Vec<f64>> {
        (**self).score_vjp(x, t, w)
    }
}

/// Exact score of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmOracle {
    gmm: GaussianMixture,
}

pub fn oracle_from_gmm(gmm: GaussianMixture) -> GmmOracle {
    GmmOracle { gmm }
}

impl GmmOracle {
    pub fn gmm(&self) -> &GaussianMixture {
        &self.gmm
    }
}

impl ScoreOracle for GmmOracle {
    fn dim(&self) -> usize {
        self.gmm.dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.gmm.score_unchecked(x, t)
    }

    fn supports_jvp(&self) -> bool {
        true
    }

    fn score_vjp(&self, x: &[f64], t: f64, w: &[f64]) -> Option<Vec<f64>> {
        Some(self.gmm.score_jvp_unchecked(x, t, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Score,
    Noise,
    Denoised,
}

impl Parameterization {
    pub const ALL: [Parameterization; 3] =
        [Parameterization::Score, Parameterization::Noise, Parameterization::Denoised];
}

/// Re-expresses `value`, given in parameterization `from` at `(x, t)`, in parameterization `to`.
pub fn convert(x: &[f64], t: f64, value: &[f64], from: Parameterization, to: Parameterization) -> Result<Vec<f64>> {
    check_positive_time(t)?;
    check_dim(x.len(), value.len())?;
    if from == to {
        return Ok(value.to_vec());
    }
    let score: Vec<f64> = match from {
        Parameterization::Score => value.to_vec(),
        Parameterization::Noise => value.iter().map(|e| -e / t).collect(),
        Parameterization::Denoised => x.iter().zip(value).map(|(xi, d)| (d - xi) / (t * t)).collect(),
    };
    let out = OracleOutput::from_score(x, t, score);
    Ok(match to {
        Parameterization::Score => out.score,
        Parameterization::Noise => out.noise_pred,
        Parameterization::Denoised => out.denoised,
    })
}

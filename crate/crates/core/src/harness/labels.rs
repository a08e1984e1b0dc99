use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;

pub const MIN_CALIBRATION_DRAWS: usize = 10_000;

/// Synthetic stand-in for a human "hallucinated" judgment on a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelRule {
    /// Hallucinated when `min_i ‖x - μ_i‖ / σ0 > distance_multiplier`.
    ModeDistance { distance_multiplier: f64 },
    /// Hallucinated when `-log p_0(x)` exceeds the `threshold_quantile` quantile of
    /// `-log p_0` over draws from `p_0`. `cutoff` caches that quantile once calibrated.
    NegLogP0Quantile {
        threshold_quantile: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::ModeDistance { distance_multiplier: 3.0 }
    }
}

impl LabelRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LabelRule::ModeDistance { distance_multiplier }
                if !(distance_multiplier > 0.0 && distance_multiplier.is_finite()) =>
            {
                Err(Error::invalid("distance_multiplier", format!("{distance_multiplier} must be positive")))
            }
            LabelRule::NegLogP0Quantile { threshold_quantile, .. }
                if !(threshold_quantile > 0.0 && threshold_quantile < 1.0) =>
            {
                Err(Error::invalid("threshold_quantile", format!("{threshold_quantile} is outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        !matches!(self, LabelRule::NegLogP0Quantile { cutoff: None, .. })
    }

    /// Estimates the quantile cutoff from `n_draws` fresh samples of `p_0`. Distance rules
    /// are returned unchanged.
    pub fn calibrate(&self, gmm: &GaussianMixture, n_draws: usize, seed: u64) -> Result<Self> {
        self.validate()?;
        let LabelRule::NegLogP0Quantile { threshold_quantile, .. } = *self else {
            return Ok(self.clone());
        };
        if n_draws < MIN_CALIBRATION_DRAWS {
            return Err(Error::invalid("n_draws", format!("{n_draws} < {MIN_CALIBRATION_DRAWS}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = gmm
            .sample(&mut rng, n_draws)
            .iter()
            .map(|x| -gmm.log_density_t(x, 0.0).expect("draws match the mixture dimension"))
            .collect();
        values.sort_by(f64::total_cmp);
        // nearest-rank quantile
        let rank = ((threshold_quantile * n_draws as f64).ceil() as usize).clamp(1, n_draws);
        Ok(LabelRule::NegLogP0Quantile { threshold_quantile, cutoff: Some(values[rank - 1]) })
    }
}

/// `true` when `x` counts as hallucinated under `rule`.
pub fn label_endpoint(gmm: &GaussianMixture, x: &[f64], rule: &LabelRule) -> Result<bool> {
    match *rule {
        LabelRule::ModeDistance { distance_multiplier } => Ok(gmm.nearest_mode_distance(x)? > distance_multiplier),
        LabelRule::NegLogP0Quantile { cutoff: Some(c), .. } => Ok(gmm.neg_log_p0(x)? > c),
        LabelRule::NegLogP0Quantile { cutoff: None, .. } => Err(Error::Uncalibrated),
    }
}

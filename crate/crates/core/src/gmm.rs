//! Isotropic Gaussian mixtures with one shared base scale, and their Gaussian smoothings
//! `p_t = p_0 * N(0, t² I)`.
//!
//! Smoothing a component `N(μ, σ0² I)` by `N(0, t² I)` only inflates its variance, so every
//! quantity here is closed form. All densities are accumulated in log space.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_time, Error, Result};
use crate::linalg::{dist_sq, dot, log_sum_exp, softmax, sub};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
}

/// `p_0(x) = Σ w_i N(x | μ_i, σ0² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct GaussianMixture {
    dim: usize,
    base_scale: f64,
    components: Vec<Component>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    dim: usize,
    base_scale: f64,
    components: Vec<Component>,
}

impl TryFrom<RawMixture> for GaussianMixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        let gmm = GaussianMixture::new(raw.base_scale, raw.components)?;
        check_dim(raw.dim, gmm.dim)?;
        Ok(gmm)
    }
}

/// Everything the identity checks need at one point, from a single pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedEval {
    pub log_density: f64,
    pub score: Vec<f64>,
    pub potential: f64,
    /// Posterior weights of the components under the unsmoothed variance σ0².
    pub responsibilities: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(base_scale: f64, components: Vec<Component>) -> Result<Self> {
        if !(base_scale.is_finite() && base_scale > 0.0) {
            return Err(Error::invalid("base_scale", format!("{base_scale} is not a positive finite number")));
        }
        let Some(first) = components.first() else {
            return Err(Error::invalid("components", "mixture needs at least one component"));
        };
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("dim", "dimension must be positive"));
        }
        for (i, c) in components.iter().enumerate() {
            check_dim(dim, c.mean.len())?;
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::invalid("weight", format!("component {i} has weight {} outside (0, 1]", c.weight)));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid("mean", format!("component {i} has a non-finite mean")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid("weights", format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { dim, base_scale, components })
    }

    /// Equal-weight mixture over the given means.
    pub fn uniform(base_scale: f64, means: Vec<Vec<f64>>) -> Result<Self> {
        let k = means.len().max(1) as f64;
        let components = means.into_iter().map(|mean| Component { weight: 1.0 / k, mean }).collect();
        Self::new(base_scale, components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base_scale(&self) -> f64 {
        self.base_scale
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn means(&self) -> impl Iterator<Item = &[f64]> {
        self.components.iter().map(|c| c.mean.as_slice())
    }

    /// Weighted mean of the component means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for (acc, v) in m.iter_mut().zip(&c.mean) {
                *acc += c.weight * v;
            }
        }
        m
    }

    /// Per-component variance of `p_t`.
    pub fn smoothed_variance(&self, t: f64) -> f64 {
        self.base_scale * self.base_scale + t * t
    }

    fn check(&self, x: &[f64], t: f64) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_time(t)
    }

    /// `log w_i + log N(x | μ_i, var I)` for every component.
    fn joint_log_terms(&self, x: &[f64], var: f64) -> Vec<f64> {
        let norm = -0.5 * self.dim as f64 * (2.0 * PI * var).ln();
        self.components.iter().map(|c| c.weight.ln() + norm - dist_sq(x, &c.mean) / (2.0 * var)).collect()
    }

    pub fn log_density_t(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check(x, t)?;
        Ok(self.log_density_unchecked(x, t))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64], t: f64) -> f64 {
        log_sum_exp(&self.joint_log_terms(x, self.smoothed_variance(t)))
    }

    /// Posterior component probabilities under `p_t`.
    pub fn responsibilities_t(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, t)?;
        Ok(softmax(&self.joint_log_terms(x, self.smoothed_variance(t))))
    }

    pub fn score_t(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, t)?;
        Ok(self.score_unchecked(x, t))
    }

    pub(crate) fn score_unchecked(&self, x: &[f64], t: f64) -> Vec<f64> {
        let var = self.smoothed_variance(t);
        let gamma = softmax(&self.joint_log_terms(x, var));
        let mut s = vec![0.0; self.dim];
        for (g, c) in gamma.iter().zip(&self.components) {
            for ((acc, m), xi) in s.iter_mut().zip(&c.mean).zip(x) {
                *acc += g * (m - xi);
            }
        }
        s.iter_mut().for_each(|v| *v /= var);
        s
    }

    /// Product of the score Jacobian with `w`. The Jacobian is symmetric, so this also
    /// serves as the transposed product.
    pub fn score_jvp(&self, x: &[f64], t: f64, w: &[f64]) -> Result<Vec<f64>> {
        self.check(x, t)?;
        check_dim(self.dim, w.len())?;
        Ok(self.score_jvp_unchecked(x, t, w))
    }

    pub(crate) fn score_jvp_unchecked(&self, x: &[f64], t: f64, w: &[f64]) -> Vec<f64> {
        // J = -I/V + Σ γ_i a_i a_iᵀ - s sᵀ, with a_i = (μ_i - x)/V
        let var = self.smoothed_variance(t);
        let gamma = softmax(&self.joint_log_terms(x, var));
        let mut s = vec![0.0; self.dim];
        let mut out: Vec<f64> = w.iter().map(|v| -v / var).collect();
        for (g, c) in gamma.iter().zip(&self.components) {
            let a: Vec<f64> = sub(&c.mean, x).into_iter().map(|v| v / var).collect();
            let aw = g * dot(&a, w);
            for ((o, si), ai) in out.iter_mut().zip(s.iter_mut()).zip(&a) {
                *o += aw * ai;
                *si += g * ai;
            }
        }
        let sw = dot(&s, w);
        for (o, si) in out.iter_mut().zip(&s) {
            *o -= sw * si;
        }
        out
    }

    /// The continuation potential
    /// `f_t(x) = -log p_0(x) - log Σ w̃_i(x) exp(‖x-μ_i‖² t² / (2σ0²(σ0²+t²)))`,
    /// with `w̃_i` the component posteriors at variance σ0². The tilt is added in log space.
    pub fn potential_f_t(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check(x, t)?;
        let s2 = self.base_scale * self.base_scale;
        let terms = self.joint_log_terms(x, s2);
        let log_p0 = log_sum_exp(&terms);
        if t == 0.0 {
            return Ok(-log_p0);
        }
        let c = t * t / (2.0 * s2 * (s2 + t * t));
        let tilted: Vec<f64> =
            terms.iter().zip(&self.components).map(|(lt, comp)| (lt - log_p0) + c * dist_sq(x, &comp.mean)).collect();
        Ok(-log_p0 - log_sum_exp(&tilted))
    }

    /// `f_t(x) + log p_t(x)`, constant in `x`: `(d/2)·log(σ0²/(σ0²+t²))`.
    pub fn potential_offset(&self, t: f64) -> f64 {
        let s2 = self.base_scale * self.base_scale;
        0.5 * self.dim as f64 * (s2 / (s2 + t * t)).ln()
    }

    /// `∇f_t = -score_t`; the offset between `f_t` and `-log p_t` does not depend on `x`.
    pub fn grad_potential_f_t(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.score_t(x, t)?.into_iter().map(|v| -v).collect())
    }

    pub fn evaluate(&self, x: &[f64], t: f64) -> Result<SmoothedEval> {
        let s2 = self.base_scale * self.base_scale;
        Ok(SmoothedEval {
            log_density: self.log_density_t(x, t)?,
            score: self.score_t(x, t)?,
            potential: self.potential_f_t(x, t)?,
            responsibilities: softmax(&self.joint_log_terms(x, s2)),
        })
    }

    /// `-log p_0(x)`.
    pub fn neg_log_p0(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.log_density_t(x, 0.0)?)
    }

    /// Smallest `‖x - μ_i‖ / σ0` over the components.
    pub fn nearest_mode_distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let best = self.means().map(|m| dist_sq(x, m)).fold(f64::INFINITY, f64::min);
        Ok(best.sqrt() / self.base_scale)
    }

    /// Draws `n` points from `p_0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        let pick =
            WeightedIndex::new(self.components.iter().map(|c| c.weight)).expect("weights validated at construction");
        (0..n)
            .map(|_| {
                let c = &self.components[pick.sample(rng)];
                c.mean
                    .iter()
                    .map(|m| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + self.base_scale * z
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn standard_1d() -> GaussianMixture {
        GaussianMixture::uniform(1.0, vec![vec![0.0]]).unwrap()
    }

    fn bimodal_1d() -> GaussianMixture {
        GaussianMixture::uniform(1.0, vec![vec![-1.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn standard_normal_at_mode() {
        let lp = standard_1d().log_density_t(&[0.0], 0.0).unwrap();
        assert_relative_eq!(lp, -0.5 * (2.0 * PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn large_t_collapses_to_single_gaussian() {
        let g = bimodal_1d();
        let t = 100.0;
        let var = 1.0 + t * t;
        for x in [-5.0, 0.0, 5.0] {
            let reference = -0.5 * (2.0 * PI * var).ln() - x * x / (2.0 * var);
            let lp = g.log_density_t(&[x], t).unwrap();
            assert!((lp - reference).abs() < 1e-3, "x={x}: {lp} vs {reference}");
        }
    }

    #[test]
    fn single_gaussian_score_closed_form() {
        let g = standard_1d();
        for (x, t) in [(0.3, 0.0), (-2.0, 1.5), (7.0, 40.0)] {
            let s = g.score_t(&[x], t).unwrap();
            assert_relative_eq!(s[0], -x / (1.0 + t * t), max_relative = 1e-15);
        }
    }

    #[test]
    fn score_vanishes_at_isolated_mode() {
        let g = GaussianMixture::uniform(0.5, vec![vec![0.0, 0.0], vec![20.0, 0.0], vec![0.0, -30.0]]).unwrap();
        let s = g.score_t(&[0.0, 0.0], 0.0).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn far_points_stay_finite() {
        let g = bimodal_1d();
        let x = [1e6];
        assert!(g.log_density_t(&x, 0.0).unwrap().is_finite());
        assert!(g.potential_f_t(&x, 3.0).unwrap().is_finite());
        assert!(g.score_t(&x, 0.1).unwrap()[0].is_finite());
    }

    #[test]
    fn potential_at_zero_noise_is_exact() {
        let g = bimodal_1d();
        for x in [-3.0, 0.1, 2.5] {
            let f0 = g.potential_f_t(&[x], 0.0).unwrap();
            assert_eq!(f0, -g.log_density_t(&[x], 0.0).unwrap());
        }
    }

    #[test]
    fn grad_potential_single_gaussian() {
        let g = GaussianMixture::uniform(0.7, vec![vec![0.0, 0.0]]).unwrap();
        let t = 1.3;
        let x = [0.4, -1.1];
        let grad = g.grad_potential_f_t(&x, t).unwrap();
        let v = g.smoothed_variance(t);
        assert_relative_eq!(grad[0], x[0] / v, max_relative = 1e-14);
        assert_relative_eq!(grad[1], x[1] / v, max_relative = 1e-14);
        let at_mode = g.grad_potential_f_t(&[0.0, 0.0], t).unwrap();
        assert!(at_mode.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn responsibilities_are_normalized() {
        let g = GaussianMixture::uniform(0.3, vec![vec![-2.0], vec![0.5], vec![4.0]]).unwrap();
        for x in [-50.0, -1.0, 0.0, 3.9, 80.0] {
            let r = g.evaluate(&[x], 0.8).unwrap().responsibilities;
            assert!(r.iter().all(|&p| p >= 0.0));
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = bimodal_1d();
        assert!(matches!(g.score_t(&[0.0, 1.0], 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(g.log_density_t(&[0.0], -1.0), Err(Error::InvalidNoiseLevel(_))));
        assert!(GaussianMixture::new(1.0, vec![]).is_err());
        assert!(GaussianMixture::new(0.0, vec![Component { weight: 1.0, mean: vec![0.0] }]).is_err());
        assert!(GaussianMixture::new(
            1.0,
            vec![Component { weight: 0.5, mean: vec![0.0] }, Component { weight: 0.4, mean: vec![1.0] }]
        )
        .is_err());
    }

    #[test]
    fn json_round_trip_uses_fixed_field_names() {
        let g = bimodal_1d();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(
            text,
            r#"{"dim":1,"base_scale":1.0,"components":[{"weight":0.5,"mean":[-1.0]},{"weight":0.5,"mean":[1.0]}]}"#
        );
        let back: GaussianMixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let wrong_dim = r#"{"dim":2,"base_scale":1.0,"components":[{"weight":1.0,"mean":[0.0]}]}"#;
        assert!(serde_json::from_str::<GaussianMixture>(wrong_dim).is_err());
    }

    #[test]
    fn samples_follow_component_moments() {
        use rand::SeedableRng;
        let g = GaussianMixture::uniform(0.5, vec![vec![10.0]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs = g.sample(&mut rng, 20_000);
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 10.0).abs() < 0.02);
        assert!((var - 0.25).abs() < 0.01);
    }
}

//! Numerical identity suite: each property draws its own reproducible random instances and
//! reports a worst-case metric against a tolerance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_index, hessian_lambda_max};
use crate::error::Error;
use crate::gmm::{Component, GaussianMixture};
use crate::linalg::{dot, norm, scale, sub};
use crate::oracle::synthetic::QuadraticNormField;
use crate::oracle::{oracle_from_gmm, Bump, PerturbationSpec, PerturbedOracle, ScoreOracle};
use crate::prox::{gradient_step, prox_step, ProxOptions};

/// Score function under test by the potential-gradient checks.
pub type ScoreFn = fn(&GaussianMixture, &[f64], f64) -> Vec<f64>;

fn exact_score(gmm: &GaussianMixture, x: &[f64], t: f64) -> Vec<f64> {
    gmm.score_unchecked(x, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Theorem1,
    Theorem2,
    Parameterization,
    Curvature,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Theorem1, Suite::Theorem2, Suite::Parameterization, Suite::Curvature];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Parameterization => "parameterization",
            Suite::Curvature => "curvature",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            Error::invalid(
                "suite",
                format!("unknown suite {s:?}; expected one of theorem1, theorem2, parameterization, curvature"),
            )
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub score: ScoreFn,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, score: exact_score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub suite: Suite,
    pub passed: bool,
    /// Worst observed value of the property's statistic.
    pub metric: f64,
    pub tolerance: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.properties.iter().filter(|p| !p.passed)
    }
}

/// Runs every property, or only those of `filter`.
pub fn run_verify(opts: &VerifyOptions, filter: Option<Suite>) -> VerifyReport {
    let mut properties = Vec::new();
    for suite in Suite::ALL {
        if filter.is_some_and(|f| f != suite) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (suite as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        match suite {
            Suite::Theorem1 => {
                properties.push(potential_identity(&mut rng));
                properties.push(potential_gradient(&mut rng, opts.score));
                properties.push(smoothing_removes_modes(opts.score));
            }
            Suite::Theorem2 => properties.push(prox_gap_order(&mut rng)),
            Suite::Parameterization => properties.push(parameterization_triple(&mut rng)),
            Suite::Curvature => {
                properties.push(index_on_quadratic_field(&mut rng));
                properties.push(index_tracks_eigenvalue(&mut rng));
            }
        }
    }
    VerifyReport { seed: opts.seed, passed: properties.iter().all(|p| p.passed), properties }
}

fn result(
    name: &str,
    suite: Suite,
    passed: bool,
    metric: f64,
    tolerance: impl Into<String>,
    detail: String,
) -> PropertyResult {
    PropertyResult { name: name.into(), suite, passed, metric, tolerance: tolerance.into(), detail }
}

/// Random mixture: means uniform in `[-3, 3]^dim`, base scale in `[0.3, 1.5]`, weights
/// proportional to uniform draws on `[0.2, 1]`.
pub fn random_mixture<R: Rng + ?Sized>(rng: &mut R, dim: usize, k: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut components: Vec<Component> = raw
        .iter()
        .map(|w| Component { weight: w / total, mean: (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect() })
        .collect();
    // absorb rounding so the weights sum to one exactly enough for validation
    let excess: f64 = components.iter().map(|c| c.weight).sum::<f64>() - 1.0;
    components[0].weight -= excess;
    GaussianMixture::new(rng.random_range(0.3..1.5), components).expect("valid by construction")
}

/// Noise level log-uniform on `[lo, hi]`.
pub fn random_noise_level<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A point near the mixture at noise level `t`: a random component mean plus
/// `N(0, (σ0² + t²) I)`.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, gmm: &GaussianMixture, t: f64) -> Vec<f64> {
    let c = &gmm.components()[rng.random_range(0..gmm.n_components())];
    let sd = gmm.smoothed_variance(t).sqrt();
    c.mean
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sd * z
        })
        .collect()
}

fn potential_identity(rng: &mut ChaCha8Rng) -> PropertyResult {
    let (mut worst_t, mut worst_0, mut worst_resp) = (0.0f64, 0.0f64, 0.0f64);
    for m in 0..50 {
        let gmm = random_mixture(rng, [1, 2, 5, 8][m % 4], [1, 2, 4][m % 3]);
        for _ in 0..20 {
            let t = random_noise_level(rng, 1e-3, 1e2);
            let x = random_point(rng, &gmm, t);
            let f = gmm.potential_f_t(&x, t).expect("valid point");
            let lp = gmm.log_density_t(&x, t).expect("valid point");
            worst_t = worst_t.max((f - (gmm.potential_offset(t) - lp)).abs());
            let f0 = gmm.potential_f_t(&x, 0.0).expect("valid point");
            worst_0 = worst_0.max((f0 + gmm.log_density_t(&x, 0.0).expect("valid point")).abs());
            let r = gmm.evaluate(&x, t).expect("valid point").responsibilities;
            worst_resp = worst_resp.max((r.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let passed = worst_t < 1e-8 && worst_0 < 1e-10 && worst_resp < 1e-10;
    result(
        "potential_identity",
        Suite::Theorem1,
        passed,
        worst_t,
        "t>0: 1e-8; t=0: 1e-10; responsibilities: 1e-10",
        format!("max |f_t + log p_t - (d/2)log(s0^2/(s0^2+t^2))| = {worst_t:.3e}; max |f_0 + log p_0| = {worst_0:.3e}; max |sum w - 1| = {worst_resp:.3e} over 1000 points"),
    )
}

fn potential_gradient(rng: &mut ChaCha8Rng, score: ScoreFn) -> PropertyResult {
    let mut worst = 0.0f64;
    for m in 0..50 {
        let gmm = random_mixture(rng, 1 + m % 5, 1 + m % 3);
        let t = random_noise_level(rng, 0.05, 10.0);
        let x = random_point(rng, &gmm, t);
        let f = |p: &[f64]| gmm.potential_f_t(p, t).expect("valid point");
        let grad: Vec<f64> = score(&gmm, &x, t).into_iter().map(|v| -v).collect();
        let fd = central_gradient(&f, &x, 1e-5 * (1.0 + norm(&x)));
        worst = worst.max(norm(&sub(&grad, &fd)) / norm(&fd).max(1e-3));
    }
    result(
        "potential_gradient",
        Suite::Theorem1,
        worst < 1e-5,
        worst,
        "1e-5 relative",
        format!(
            "max relative gap between -score and the finite-difference gradient of f_t: {worst:.3e} over 50 points"
        ),
    )
}

fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            p[j] = x[j] + h;
            let up = f(&p);
            p[j] = x[j] - h;
            let down = f(&p);
            p[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn smoothing_removes_modes(score: ScoreFn) -> PropertyResult {
    let gmm = GaussianMixture::uniform(0.5, vec![vec![-2.0], vec![2.0]]).expect("valid mixture");
    let sign_changes = |t: f64| {
        let grid: Vec<f64> = (0..=2000).map(|i| -6.0 + 12.0 * (i as f64 + 0.5) / 2001.0).collect();
        let signs: Vec<bool> = grid.iter().map(|&x| score(&gmm, &[x], t)[0] > 0.0).collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    };
    let (sharp, smooth) = (sign_changes(0.0), sign_changes(10.0));
    result(
        "smoothing_removes_modes",
        Suite::Theorem1,
        sharp == 3 && smooth == 1,
        (sharp + smooth) as f64,
        "3 stationary points at t=0, 1 at t=10",
        format!("score sign changes: {sharp} at t=0, {smooth} at t=10"),
    )
}

/// Gap between the proximal point and the explicit gradient step at `Δt` and `Δt/2`, for
/// `Δt = 0.05·(σ0² + t²)`.
pub fn prox_gap_ratio(gmm: &GaussianMixture, x: &[f64], t: f64) -> crate::Result<f64> {
    let opts = ProxOptions { tol: 1e-14, max_iter: 500 };
    let gap = |dt: f64| -> crate::Result<f64> {
        let y = prox_step(gmm, x, t, dt, opts)?.point;
        Ok(norm(&sub(&y, &gradient_step(gmm, x, t, dt)?)))
    };
    let dt = 0.05 * gmm.smoothed_variance(t);
    Ok(gap(dt)? / gap(0.5 * dt)?)
}

fn prox_gap_order(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut ratios = Vec::new();
    let mut failures = Vec::new();
    for m in 0..20 {
        let gmm = random_mixture(rng, 1 + m % 4, 1 + m % 3);
        let t = random_noise_level(rng, 0.1, 5.0);
        let x = random_point(rng, &gmm, t);
        match prox_gap_ratio(&gmm, &x, t) {
            Ok(r) => ratios.push(r),
            Err(e) => failures.push(e.to_string()),
        }
    }
    let bad = ratios.iter().filter(|r| !(3.0..=5.0).contains(*r)).count();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    result(
        "prox_euler_gap_order",
        Suite::Theorem2,
        failures.is_empty() && bad == 0,
        hi,
        "halving ratio in [3, 5]",
        format!("gap ratios in [{lo:.3}, {hi:.3}] over {} instances; {} solver failures", ratios.len(), failures.len()),
    )
}

/// Worst pairwise disagreement among `-t·s`, `ε` and `(x - D)/t`, relative to the largest of
/// `‖-t·s‖`, `‖ε‖` and `‖x‖/t`. The last term is the magnitude of the operands of the
/// subtraction `x - D`, which bounds the achievable accuracy of that form.
pub fn triple_residual<O: ScoreOracle + ?Sized>(oracle: &O, x: &[f64], t: f64) -> f64 {
    let out = oracle.evaluate(x, t);
    let a = scale(&out.score, -t);
    let b = out.noise_pred.clone();
    let c = scale(&sub(x, &out.denoised), 1.0 / t);
    let denom = norm(&a).max(norm(&b)).max(norm(x) / t).max(f64::MIN_POSITIVE);
    [norm(&sub(&a, &b)), norm(&sub(&b, &c)), norm(&sub(&a, &c))].into_iter().fold(0.0, f64::max) / denom
}

fn parameterization_triple(rng: &mut ChaCha8Rng) -> PropertyResult {
    let gmm = random_mixture(rng, 3, 3);
    let exact = oracle_from_gmm(gmm.clone());
    let mut bumps = Vec::new();
    for _ in 0..2 {
        let u: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let u = scale(&u, 1.0 / norm(&u));
        let center = random_point(rng, &gmm, 0.0);
        bumps.push(Bump::new(center, 0.5, 4.0, u, [0.1, 5.0]).expect("valid bump"));
    }
    let perturbed = PerturbedOracle::new(exact.clone(), PerturbationSpec { bumps }).expect("matching dims");
    let oracles: [(&str, &dyn ScoreOracle); 2] = [("exact", &exact), ("perturbed", &perturbed)];
    let mut worst = 0.0f64;
    for (_, o) in oracles {
        for _ in 0..1000 {
            let t = random_noise_level(rng, 0.01, 80.0);
            let x = random_point(rng, &gmm, t);
            worst = worst.max(triple_residual(o, &x, t));
        }
    }
    result(
        "parameterization_triple",
        Suite::Parameterization,
        worst < 1e-9,
        worst,
        "1e-9 relative",
        format!("max relative disagreement of -t*s, eps, (x-D)/t: {worst:.3e} over 2000 probes"),
    )
}

/// Symmetric positive definite `Q diag(λ) Qᵀ` with a random orthogonal `Q`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, eigenvalues: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = eigenvalues.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= p * ui);
        }
        let n = norm(&v);
        if n > 1e-6 {
            q.push(scale(&v, 1.0 / n));
        }
    }
    let a =
        (0..d).map(|i| (0..d).map(|j| (0..d).map(|k| q[k][i] * eigenvalues[k] * q[k][j]).sum()).collect()).collect();
    (a, q)
}

fn index_on_quadratic_field(rng: &mut ChaCha8Rng) -> PropertyResult {
    // On this field ∇‖v‖ = Ax, so the probe direction is one power-iteration step from x and
    // H/ρ = ‖A·Ax/‖Ax‖‖. Points are drawn around the principal axis, where that step already
    // lines up with the top eigenvector.
    let lambdas = [10.0, 1.5, 1.0, 0.5];
    let (a, q) = random_spd(rng, &lambdas);
    let field = QuadraticNormField::new(a, vec![1.0, 0.0, 0.0, 0.0]).expect("symmetric");
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let along = rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..4)
            .map(|i| {
                along * q[0][i] + (1..4).map(|k| 0.5 * q[k][i] * rng.sample::<f64, _>(StandardNormal)).sum::<f64>()
            })
            .collect();
        let rho = 0.05;
        let h = curvature_index(&field, &x, 1.0, rho).h_value;
        worst = worst.max((h / rho - lambdas[0]).abs() / lambdas[0]);
    }
    result(
        "index_matches_eigenvalue",
        Suite::Curvature,
        worst < 0.1,
        worst,
        "10% relative",
        format!("max |H/rho - lambda_max| / lambda_max on the quadratic-norm field: {worst:.3e} over 50 points"),
    )
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// `(H/ρ, λ_max)` pairs over random mixtures, noise levels and points.
pub fn index_eigen_pairs<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|m| {
            let gmm = random_mixture(rng, 2 + m % 3, 2 + m % 3);
            let t = random_noise_level(rng, 0.1, 3.0);
            let x = random_point(rng, &gmm, t);
            let o = oracle_from_gmm(gmm.clone());
            let rho = 0.01 * gmm.smoothed_variance(t).sqrt();
            let h = curvature_index(&o, &x, t, rho).h_value / rho;
            (h, hessian_lambda_max(&o, &x, t, 300).lambda)
        })
        .collect()
}

fn index_tracks_eigenvalue(rng: &mut ChaCha8Rng) -> PropertyResult {
    let pairs = index_eigen_pairs(rng, 200);
    let (h, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let r = pearson(&h, &l);
    result(
        "index_tracks_eigenvalue",
        Suite::Curvature,
        r > 0.8,
        r,
        "Pearson r > 0.8",
        format!("Pearson r between H/rho and the Hessian's top eigenvalue: {r:.4} over 200 probes"),
    )
}

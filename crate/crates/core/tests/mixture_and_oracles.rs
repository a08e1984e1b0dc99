use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rods_core::harness::{chain_inits, label_endpoint, run_chains, LabelRule};
use rods_core::oracle::{convert, Bump};
use rods_core::prox::{gradient_step, prox_step, ProxOptions};
use rods_core::verify::{random_mixture, random_noise_level, random_point, triple_residual};
use rods_core::{
    make_schedule, oracle_from_gmm, Component, GaussianMixture, Parameterization, PerturbationSpec, PerturbedOracle,
    SamplerConfig, ScoreOracle,
};

fn mixture(seed: u64, dim: usize, k: usize) -> GaussianMixture {
    random_mixture(&mut ChaCha8Rng::seed_from_u64(seed), dim, k)
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn refine(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            refine(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
                + refine(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    refine(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn smoothed_density_matches_quadrature_convolution() {
    let gmm = GaussianMixture::new(
        0.6,
        vec![Component { weight: 0.3, mean: vec![-1.2] }, Component { weight: 0.7, mean: vec![0.9] }],
    )
    .unwrap();
    let t = 0.7;
    let p0 = |y: f64| gmm.components().iter().map(|c| c.weight * normal_pdf(y - c.mean[0], 0.36)).sum::<f64>();
    for x in [-2.3, -0.4, 0.0, 1.1, 3.5] {
        let conv = integrate(&|y| p0(y) * normal_pdf(x - y, t * t), -15.0, 15.0, 1e-12);
        let ours = gmm.log_density_t(&[x], t).unwrap();
        assert!((ours - conv.ln()).abs() < 1e-6, "x={x}: {ours} vs {}", conv.ln());
    }
}

#[test]
fn perturbed_euler_creates_hallucinations_the_exact_oracle_does_not() {
    let gmm = GaussianMixture::uniform(0.5, vec![vec![-3.0, 0.0], vec![3.0, 0.0]]).unwrap();
    let rule =
        LabelRule::NegLogP0Quantile { threshold_quantile: 0.999, cutoff: None }.calibrate(&gmm, 10_000, 3).unwrap();
    let schedule = make_schedule(40, 0.002, 40.0).unwrap();
    let inits = chain_inits(100, 64, 2, schedule.t_max());
    let count = |records: &[rods_core::TrajectoryRecord]| {
        records.iter().filter(|r| label_endpoint(&gmm, r.endpoint(), &rule).unwrap()).count()
    };
    let exact = oracle_from_gmm(gmm.clone());
    let clean = run_chains(&exact, &schedule, &SamplerConfig::euler(), &inits, None).unwrap();
    assert_eq!(count(&clean), 0);
    // double the amplitude until the planted error produces an off-manifold endpoint
    let mut amplitude = 1.0;
    let found = loop {
        let bump = Bump::new(vec![0.0, 0.0], 0.5, amplitude, vec![0.0, 1.0], [0.5, 5.0]).unwrap();
        let o = PerturbedOracle::new(exact.clone(), PerturbationSpec { bumps: vec![bump] }).unwrap();
        let hallucinated = count(&run_chains(&o, &schedule, &SamplerConfig::euler(), &inits, None).unwrap());
        if hallucinated > 0 || amplitude > 1e3 {
            break hallucinated;
        }
        amplitude *= 2.0;
    };
    assert!(found >= 1, "no hallucination up to amplitude {amplitude}");
}

#[test]
fn single_component_potential_is_a_shifted_negative_log_density() {
    let gmm = GaussianMixture::uniform(0.8, vec![vec![1.0, -2.0, 0.5]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in [0.1, 1.0, 7.0] {
        let shift = |x: &[f64]| gmm.potential_f_t(x, t).unwrap() + gmm.log_density_t(x, t).unwrap();
        let first = shift(&[0.0, 0.0, 0.0]);
        for _ in 0..100 {
            let x = random_point(&mut rng, &gmm, 3.0);
            assert!((shift(&x) - first).abs() < 1e-9);
        }
        let grad = gmm.grad_potential_f_t(&[1.0, -2.0, 0.5], t).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-8));
    }
}

#[test]
fn exact_oracle_is_the_mixture_score() {
    let gmm = mixture(5, 4, 3);
    let o = oracle_from_gmm(gmm.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let t = random_noise_level(&mut rng, 0.01, 50.0);
        let x = random_point(&mut rng, &gmm, t);
        let a = o.score(&x, t);
        let b = gmm.score_t(&x, t).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        assert!(triple_residual(&o, &x, t) < 1e-9);
    }
}

#[test]
fn prox_gap_shrinks_with_the_step() {
    let gmm = mixture(8, 2, 3);
    let x = [0.4, -1.0];
    let t = 0.8;
    let grad = gmm.grad_potential_f_t(&x, t).unwrap();
    let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    for dt in [1e-2, 1e-4, 1e-6] {
        let y = prox_step(&gmm, &x, t, dt, ProxOptions::default()).unwrap().point;
        let e = gradient_step(&gmm, &x, t, dt).unwrap();
        let gap = y.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let moved = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap <= 2.0 * dt * gn);
        assert!(moved <= 2.0 * dt * gn);
    }
}

fn arb_case() -> impl Strategy<Value = (GaussianMixture, Vec<f64>, f64)> {
    (any::<u64>(), 1usize..=8, 1usize..=4, 0.01f64..20.0).prop_map(|(seed, dim, k, t)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gmm = random_mixture(&mut rng, dim, k);
        let x = random_point(&mut rng, &gmm, t);
        (gmm, x, t)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_identity_and_normalization((gmm, x, t) in arb_case()) {
        // The constant is (d/2)·log(σ0²/(σ0²+t²)) from normalizing the d-dimensional kernels; a bare
        // ½·log only matches for d = 1, and the sign is the opposite of writing it on the left-hand side.
        let f = gmm.potential_f_t(&x, t).unwrap();
        let lp = gmm.log_density_t(&x, t).unwrap();
        prop_assert!((f + lp - gmm.potential_offset(t)).abs() < 1e-8);
        let r = gmm.responsibilities_t(&x, t).unwrap();
        prop_assert!(r.iter().all(|w| *w >= 0.0));
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn score_is_the_gradient_of_the_log_density((gmm, x, t) in arb_case()) {
        let s = gmm.score_t(&x, t).unwrap();
        let h = 1e-5;
        let mut fd = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[j] += h;
            down[j] -= h;
            fd.push((gmm.log_density_t(&up, t).unwrap() - gmm.log_density_t(&down, t).unwrap()) / (2.0 * h));
        }
        let err = s.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = s.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        prop_assert!(err / scale < 1e-5, "relative error {}", err / scale);
    }

    #[test]
    fn potential_gradient_matches_finite_differences((gmm, x, t) in arb_case()) {
        prop_assume!(gmm.dim() <= 5);
        let g = gmm.grad_potential_f_t(&x, t).unwrap();
        let h = 1e-5;
        for j in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (gmm.potential_f_t(&up, t).unwrap() - gmm.potential_f_t(&down, t).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() < 1e-5 * (1.0 + g[j].abs()));
        }
    }

    #[test]
    fn score_jacobian_products_match_finite_differences((gmm, x, t) in arb_case(), seed in any::<u64>()) {
        let w = random_point(&mut ChaCha8Rng::seed_from_u64(seed), &gmm, 1.0);
        let jw = gmm.score_jvp(&x, t, &w).unwrap();
        let h = 1e-6;
        let up: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + h * b).collect();
        let down: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a - h * b).collect();
        let (su, sd) = (gmm.score_t(&up, t).unwrap(), gmm.score_t(&down, t).unwrap());
        let scale = jw.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        for j in 0..x.len() {
            let fd = (su[j] - sd[j]) / (2.0 * h);
            prop_assert!((fd - jw[j]).abs() < 1e-5 * scale);
        }
    }

    #[test]
    fn direct_density_formula_agrees((gmm, x, t) in arb_case()) {
        prop_assume!(gmm.dim() <= 3);
        let v = gmm.smoothed_variance(t);
        let direct: f64 = gmm.components().iter().map(|c| {
            let r2: f64 = c.mean.iter().zip(&x).map(|(m, xi)| (m - xi).powi(2)).sum();
            c.weight * (-r2 / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).powf(gmm.dim() as f64 / 2.0)
        }).sum();
        prop_assume!(direct > 1e-250);
        assert_relative_eq!(gmm.log_density_t(&x, t).unwrap().exp(), direct, max_relative = 1e-10);
    }

    #[test]
    fn conversions_invert_each_other(
        x in prop::collection::vec(-10.0f64..10.0, 3),
        v in prop::collection::vec(-10.0f64..10.0, 3),
        t in 0.05f64..20.0,
    ) {
        for from in Parameterization::ALL {
            for to in Parameterization::ALL {
                let there = convert(&x, t, &v, from, to).unwrap();
                let back = convert(&x, t, &there, to, from).unwrap();
                for (a, b) in back.iter().zip(&v) {
                    prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{from:?}->{to:?}");
                }
            }
        }
    }

    #[test]
    fn perturbation_vanishes_outside_the_bump_support(
        seed in any::<u64>(),
        width in 0.1f64..2.0,
        amplitude in -50.0f64..50.0,
        dist in 6.0f64..40.0,
        t in 0.1f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gmm = random_mixture(&mut rng, 3, 2);
        let center = random_point(&mut rng, &gmm, 0.0);
        let dir = random_point(&mut rng, &gmm, 1.0);
        let n = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let dir: Vec<f64> = dir.iter().map(|a| a / n).collect();
        let bump = Bump::new(center.clone(), width, amplitude, dir.clone(), [0.0, 20.0]).unwrap();
        let base = oracle_from_gmm(gmm);
        let o = PerturbedOracle::new(base.clone(), PerturbationSpec { bumps: vec![bump] }).unwrap();
        let x: Vec<f64> = center.iter().zip(&dir).map(|(c, u)| c + dist * width * u).collect();
        let (a, b) = (o.score(&x, t), base.score(&x, t));
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let s = b.iter().map(|q| q * q).sum::<f64>().sqrt();
        prop_assert!(diff < 1e-9 * (1.0 + s));
        prop_assert!(triple_residual(&o, &x, t) < 1e-9);
    }
}

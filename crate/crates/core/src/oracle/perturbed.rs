use serde::{Deserialize, Serialize};

use super::ScoreOracle;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist_sq, dot, norm};

/// Bumps are cut off beyond this many widths from their center.
pub const SUPPORT_WIDTHS: f64 = 6.0;

/// A localized additive score error `a·u·exp(-‖x-c‖²/(2w²))`, switched on for `t` in
/// `t_range` (both ends inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBump")]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
    pub direction: Vec<f64>,
    pub t_range: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBump {
    center: Vec<f64>,
    width: f64,
    amplitude: f64,
    direction: Vec<f64>,
    t_range: [f64; 2],
}

impl TryFrom<RawBump> for Bump {
    type Error = Error;

    fn try_from(r: RawBump) -> Result<Self> {
        Bump::new(r.center, r.width, r.amplitude, r.direction, r.t_range)
    }
}

impl Bump {
    pub fn new(center: Vec<f64>, width: f64, amplitude: f64, direction: Vec<f64>, t_range: [f64; 2]) -> Result<Self> {
        check_dim(center.len(), direction.len())?;
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid("width", format!("{width} is not a positive finite number")));
        }
        if !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("bump", "amplitude and center must be finite"));
        }
        if (norm(&direction) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("direction", "direction must be a unit vector"));
        }
        if t_range[0].partial_cmp(&t_range[1]) != Some(std::cmp::Ordering::Less) {
            return Err(Error::invalid("t_range", format!("{t_range:?} is not an increasing interval")));
        }
        Ok(Self { center, width, amplitude, direction, t_range })
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.t_range[0] <= t && t <= self.t_range[1]
    }

    fn profile(&self, x: &[f64]) -> f64 {
        let r2 = dist_sq(x, &self.center);
        let cutoff = SUPPORT_WIDTHS * self.width;
        if r2 >= cutoff * cutoff {
            0.0
        } else {
            (-r2 / (2.0 * self.width * self.width)).exp()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub bumps: Vec<Bump>,
}

impl PerturbationSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.bumps.iter().try_for_each(|b| check_dim(dim, b.center.len()))
    }
}

/// A base oracle plus a sum of time-gated bumps. Evaluations landing exactly on a gate
/// boundary count as inside; the field jumps there.
#[derive(Debug, Clone)]
pub struct PerturbedOracle<O> {
    base: O,
    spec: PerturbationSpec,
}

impl<O: ScoreOracle> PerturbedOracle<O> {
    pub fn new(base: O, spec: PerturbationSpec) -> Result<Self> {
        spec.validate(base.dim())?;
        Ok(Self { base, spec })
    }

    pub fn base(&self) -> &O {
        &self.base
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }
}

pub fn oracle_with_perturbation<O: ScoreOracle>(base: O, spec: PerturbationSpec) -> Result<PerturbedOracle<O>> {
    PerturbedOracle::new(base, spec)
}

impl<O: ScoreOracle> ScoreOracle for PerturbedOracle<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut s = self.base.score(x, t);
        for b in self.spec.bumps.iter().filter(|b| b.is_active(t)) {
            let k = b.amplitude * b.profile(x);
            if k != 0.0 {
                s.iter_mut().zip(&b.direction).for_each(|(si, u)| *si += k * u);
            }
        }
        s
    }

    fn supports_jvp(&self) -> bool {
        self.base.supports_jvp()
    }

    fn score_vjp(&self, x: &[f64], t: f64, w: &[f64]) -> Option<Vec<f64>> {
        // bump Jacobian is a·u·∇φᵀ with ∇φ = -φ·(x-c)/w², so its transpose maps w to a(u·w)∇φ
        let mut out = self.base.score_vjp(x, t, w)?;
        for b in self.spec.bumps.iter().filter(|b| b.is_active(t)) {
            let phi = b.profile(x);
            if phi == 0.0 {
                continue;
            }
            let k = -b.amplitude * dot(&b.direction, w) * phi / (b.width * b.width);
            out.iter_mut().zip(x.iter().zip(&b.center)).for_each(|(o, (xi, ci))| *o += k * (xi - ci));
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::GaussianMixture;
    use crate::oracle::oracle_from_gmm;

    fn base() -> crate::oracle::GmmOracle {
        oracle_from_gmm(GaussianMixture::uniform(0.5, vec![vec![-2.0, 0.0], vec![2.0, 0.0]]).unwrap())
    }

    fn bump(amplitude: f64) -> Bump {
        Bump::new(vec![0.5, 0.0], 0.4, amplitude, vec![-1.0, 0.0], [0.5, 5.0]).unwrap()
    }

    #[test]
    fn empty_or_zero_amplitude_is_identity() {
        let b = base();
        let empty = PerturbedOracle::new(base(), PerturbationSpec::default()).unwrap();
        let zero = PerturbedOracle::new(base(), PerturbationSpec { bumps: vec![bump(0.0)] }).unwrap();
        for (x, t) in [([0.5, 0.0], 1.0), ([-1.0, 0.3], 0.6), ([3.0, -2.0], 4.0)] {
            assert_eq!(empty.score(&x, t), b.score(&x, t));
            assert_eq!(zero.score(&x, t), b.score(&x, t));
        }
    }

    #[test]
    fn time_gate_is_inclusive() {
        let p = PerturbedOracle::new(base(), PerturbationSpec { bumps: vec![bump(3.0)] }).unwrap();
        let x = [0.5, 0.0];
        assert_ne!(p.score(&x, 0.5), base().score(&x, 0.5));
        assert_ne!(p.score(&x, 5.0), base().score(&x, 5.0));
        assert_eq!(p.score(&x, 0.49), base().score(&x, 0.49));
        assert_eq!(p.score(&x, 5.01), base().score(&x, 5.01));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let p = PerturbedOracle::new(base(), PerturbationSpec { bumps: vec![bump(3.0)] }).unwrap();
        let x = [0.7, 0.2];
        let t = 1.0;
        let w = [0.3, -0.8];
        let got = p.score_vjp(&x, t, &w).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let sp = p.score(&xp, t);
            let sm = p.score(&xm, t);
            let fd: f64 = (0..2).map(|i| w[i] * (sp[i] - sm[i]) / (2.0 * h)).sum();
            assert!((got[j] - fd).abs() < 1e-6, "component {j}: {} vs {fd}", got[j]);
        }
    }

    #[test]
    fn rejects_invalid_bumps() {
        assert!(Bump::new(vec![0.0], 0.0, 1.0, vec![1.0], [0.0, 1.0]).is_err());
        assert!(Bump::new(vec![0.0, 0.0], 1.0, 1.0, vec![1.0, 1.0], [0.0, 1.0]).is_err());
        assert!(Bump::new(vec![0.0], 1.0, 1.0, vec![1.0], [2.0, 1.0]).is_err());
        let spec = PerturbationSpec { bumps: vec![Bump::new(vec![0.0], 1.0, 1.0, vec![1.0], [0.0, 1.0]).unwrap()] };
        assert!(PerturbedOracle::new(base(), spec).is_err());
    }

    #[test]
    fn json_shape() {
        let text = r#"{"bumps":[{"center":[0.5,0.0],"width":0.4,"amplitude":3.0,"direction":[-1.0,0.0],"t_range":[0.5,5.0]}]}"#;
        let spec: PerturbationSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.bumps[0], bump(3.0));
        assert_eq!(serde_json::to_string(&spec).unwrap(), text);
        let bad = r#"{"bumps":[{"center":[0.0],"width":-1.0,"amplitude":1.0,"direction":[1.0],"t_range":[0.0,1.0]}]}"#;
        assert!(serde_json::from_str::<PerturbationSpec>(bad).is_err());
    }
}

//! Probability-flow ODE samplers over a [`TimeSchedule`]: explicit Euler, Heun, and the
//! curvature-triggered robust variant.
//!
//! Every step uses the drift `d = (x - D(x; t))/t = ε(x, t)` and advances
//! `x_{i+1} = x_i + (t_{i+1} - t_i)·d`. The robust variant probes the index `H` inside a
//! window of step indices and, when `H ≥ ε`, evaluates the drift at a shifted point
//! `x_i + δ_i` instead.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_index, find_delta, DeltaObjective};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{add, axpy, norm};
use crate::oracle::ScoreOracle;
use crate::schedule::TimeSchedule;

pub const DEFAULT_WINDOW: [f64; 2] = [0.1, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Heun,
    RodsSas,
    RodsCas,
}

impl Method {
    pub fn is_robust(self) -> bool {
        matches!(self, Method::RodsSas | Method::RodsCas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: Method,
    /// Trigger threshold; `+inf` (written `"inf"` in JSON) never triggers.
    #[serde(default = "infinite", with = "crate::serde_ext::extended_f64")]
    pub epsilon: f64,
    #[serde(default = "unit")]
    pub rho: f64,
    /// Probe radius for `H` when it should differ from the correction radius `rho`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_rho: Option<f64>,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    #[serde(default = "one")]
    pub delta_steps: usize,
}

fn infinite() -> f64 {
    f64::INFINITY
}
fn unit() -> f64 {
    1.0
}
fn one() -> usize {
    1
}
fn default_window() -> [f64; 2] {
    DEFAULT_WINDOW
}

impl SamplerConfig {
    pub fn new(method: Method) -> Self {
        Self { method, epsilon: f64::INFINITY, rho: 1.0, detection_rho: None, window: DEFAULT_WINDOW, delta_steps: 1 }
    }

    pub fn euler() -> Self {
        Self::new(Method::Euler)
    }

    pub fn rods(method: Method, epsilon: f64, rho: f64) -> Self {
        Self { epsilon, rho, ..Self::new(method) }
    }

    pub fn detection_radius(&self) -> f64 {
        self.detection_rho.unwrap_or(self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::invalid("epsilon", format!("{} must be non-negative", self.epsilon)));
        }
        for (name, r) in [("rho", Some(self.rho)), ("detection_rho", self.detection_rho)] {
            if let Some(r) = r {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::invalid(name, format!("{r} is not a positive finite number")));
                }
            }
        }
        let [a, b] = self.window;
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
            return Err(Error::invalid("window", format!("[{a}, {b}] is not a sub-interval of [0, 1]")));
        }
        if self.delta_steps == 0 {
            return Err(Error::invalid("delta_steps", "need at least one ascent step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    /// `N + 1` states, `states[0]` the initial point and `states[N]` the sample.
    pub states: Vec<Vec<f64>>,
    /// The schedule's `N + 1` levels.
    pub times: Vec<f64>,
    /// Per step; 0 where `H` was not computed.
    pub h_values: Vec<f64>,
    pub triggered: Vec<bool>,
    pub deltas: Vec<Option<Vec<f64>>>,
    /// `H` crossed the threshold but no perturbation direction existed, so the step fell
    /// back to the plain update.
    pub fallback: Vec<bool>,
    pub wall_time: f64,
}

impl TrajectoryRecord {
    fn start(schedule: &TimeSchedule, x_init: &[f64]) -> Self {
        let n = schedule.n_steps();
        let mut states = Vec::with_capacity(n + 1);
        states.push(x_init.to_vec());
        Self {
            states,
            times: schedule.times().to_vec(),
            h_values: vec![0.0; n],
            triggered: vec![false; n],
            deltas: vec![None; n],
            fallback: vec![false; n],
            wall_time: 0.0,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.h_values.len()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("a record always holds the initial state")
    }

    /// Largest recorded `H`. Only probed steps carry non-zero values, so this is the maximum
    /// over the probing window.
    pub fn max_h(&self) -> f64 {
        self.h_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn n_triggers(&self) -> usize {
        self.triggered.iter().filter(|&&b| b).count()
    }

    /// Bitwise equality of everything except the wall time.
    pub fn same_path(&self, other: &Self) -> bool {
        fn bits(v: &[f64]) -> Vec<u64> {
            v.iter().map(|x| x.to_bits()).collect()
        }
        self.states.len() == other.states.len()
            && self.states.iter().zip(&other.states).all(|(a, b)| bits(a) == bits(b))
            && bits(&self.times) == bits(&other.times)
            && bits(&self.h_values) == bits(&other.h_values)
            && self.triggered == other.triggered
            && self.fallback == other.fallback
            && self.deltas.len() == other.deltas.len()
            && self.deltas.iter().zip(&other.deltas).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => bits(a) == bits(b),
                (None, None) => true,
                _ => false,
            })
    }

    /// One JSON object per state: `{"i","t","x","h","triggered","delta_norm"}`. The final
    /// line carries the sample at `t = 0` with `h = 0`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            i: usize,
            t: f64,
            x: &'a [f64],
            h: f64,
            triggered: bool,
            delta_norm: Option<f64>,
        }
        for (i, x) in self.states.iter().enumerate() {
            let step = i < self.n_steps();
            let line = Line {
                i,
                t: self.times[i],
                x,
                h: if step { self.h_values[i] } else { 0.0 },
                triggered: step && self.triggered[i],
                delta_norm: if step { self.deltas[i].as_deref().map(norm) } else { None },
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `(x - D(x; t))/t`, identical to the noise prediction.
fn drift<O: ScoreOracle + ?Sized>(oracle: &O, x: &[f64], t: f64) -> Vec<f64> {
    oracle.evaluate(x, t).noise_pred
}

fn check_inputs<O: ScoreOracle + ?Sized>(oracle: &O, x_init: &[f64]) -> Result<()> {
    check_dim(oracle.dim(), x_init.len())
}

pub fn euler_sample<O: ScoreOracle + ?Sized>(
    oracle: &O,
    schedule: &TimeSchedule,
    x_init: &[f64],
) -> Result<TrajectoryRecord> {
    check_inputs(oracle, x_init)?;
    let clock = Instant::now();
    let mut rec = TrajectoryRecord::start(schedule, x_init);
    let ts = schedule.times();
    let mut x = x_init.to_vec();
    for i in 0..schedule.n_steps() {
        x = axpy(&x, ts[i + 1] - ts[i], &drift(oracle, &x, ts[i]));
        rec.states.push(x.clone());
    }
    rec.wall_time = clock.elapsed().as_secs_f64();
    Ok(rec)
}

/// Heun predictor-corrector; the last step into `t = 0` is a plain Euler step.
pub fn heun_sample<O: ScoreOracle + ?Sized>(
    oracle: &O,
    schedule: &TimeSchedule,
    x_init: &[f64],
) -> Result<TrajectoryRecord> {
    check_inputs(oracle, x_init)?;
    let clock = Instant::now();
    let mut rec = TrajectoryRecord::start(schedule, x_init);
    let ts = schedule.times();
    let mut x = x_init.to_vec();
    for i in 0..schedule.n_steps() {
        let dt = ts[i + 1] - ts[i];
        let d = drift(oracle, &x, ts[i]);
        let predicted = axpy(&x, dt, &d);
        x = if ts[i + 1] > 0.0 {
            let d2 = drift(oracle, &predicted, ts[i + 1]);
            let mean: Vec<f64> = d.iter().zip(&d2).map(|(a, b)| 0.5 * (a + b)).collect();
            axpy(&x, dt, &mean)
        } else {
            predicted
        };
        rec.states.push(x.clone());
    }
    rec.wall_time = clock.elapsed().as_secs_f64();
    Ok(rec)
}

pub fn rods_sample<O: ScoreOracle + ?Sized>(
    oracle: &O,
    schedule: &TimeSchedule,
    config: &SamplerConfig,
    x_init: &[f64],
) -> Result<TrajectoryRecord> {
    let objective = match config.method {
        Method::RodsSas => DeltaObjective::Sharpness,
        Method::RodsCas => DeltaObjective::Curvature,
        other => return Err(Error::invalid("method", format!("{other:?} is not a robust method"))),
    };
    config.validate()?;
    check_inputs(oracle, x_init)?;
    let clock = Instant::now();
    let mut rec = TrajectoryRecord::start(schedule, x_init);
    let ts = schedule.times();
    let mut x = x_init.to_vec();
    for i in 0..schedule.n_steps() {
        let (t, dt) = (ts[i], ts[i + 1] - ts[i]);
        let mut d = drift(oracle, &x, t);
        if schedule.in_window(i, config.window) {
            let probe = curvature_index(oracle, &x, t, config.detection_radius());
            rec.h_values[i] = probe.h_value;
            if !probe.degenerate && probe.h_value >= config.epsilon {
                match find_delta(oracle, &x, t, config.rho, config.delta_steps, objective) {
                    Ok(delta) => {
                        d = drift(oracle, &add(&x, &delta), t);
                        rec.triggered[i] = true;
                        rec.deltas[i] = Some(delta);
                    }
                    Err(_) => rec.fallback[i] = true,
                }
            }
        }
        x = axpy(&x, dt, &d);
        rec.states.push(x.clone());
    }
    rec.wall_time = clock.elapsed().as_secs_f64();
    Ok(rec)
}

/// Runs whichever sampler `config.method` names.
pub fn run_sampler<O: ScoreOracle + ?Sized>(
    oracle: &O,
    schedule: &TimeSchedule,
    config: &SamplerConfig,
    x_init: &[f64],
) -> Result<TrajectoryRecord> {
    match config.method {
        Method::Euler => euler_sample(oracle, schedule, x_init),
        Method::Heun => heun_sample(oracle, schedule, x_init),
        Method::RodsSas | Method::RodsCas => rods_sample(oracle, schedule, config, x_init),
    }
}

//! A two-dimensional bimodal mixture with one spurious sink planted in its score.
//!
//! The exact score of `½N((-3,0), σ0²I) + ½N((3,0), σ0²I)` with `σ0 = 0.5` is corrupted by a
//! single bump at `(1.74, 0)` pushing toward `-x`, active only for `t ∈ [0.46, 0.94]`. Chains
//! heading for the right mode that cross it at that stage are thrown back and end up between
//! the modes.
//! The calibration and experiment helpers here mirror what `rods roc`, `rods compare` and
//! `rods critical-steps` do with `configs/bimodal_testbed.json`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::harness::{
    chain_inits, chain_seed, compare_records, critical_step_map, exact_thresholds, label_records,
    median_critical_index, roc_sweep, run_chains, LabelRule, PairedExperiment, RocCurve, RocPoint,
};
use crate::oracle::{oracle_from_gmm, Bump, GmmOracle, PerturbationSpec, PerturbedOracle};
use crate::sampler::{Method, SamplerConfig, TrajectoryRecord, DEFAULT_WINDOW};
use crate::schedule::{ScheduleSpec, TimeSchedule};

pub const TARGET_TPR: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Testbed {
    pub gmm: GaussianMixture,
    pub perturbation: PerturbationSpec,
    pub schedule: ScheduleSpec,
    pub rho: f64,
    pub window: [f64; 2],
    pub label_rule: LabelRule,
    pub n_chains: usize,
    pub master_seed: u64,
}

impl Testbed {
    pub fn bimodal() -> Self {
        let gmm = GaussianMixture::uniform(0.5, vec![vec![-3.0, 0.0], vec![3.0, 0.0]]).expect("valid mixture");
        let bump = Bump::new(vec![1.74, 0.0], 0.44, 22.0, vec![-1.0, 0.0], [0.46, 0.94]).expect("valid bump");
        Self {
            gmm,
            perturbation: PerturbationSpec { bumps: vec![bump] },
            schedule: ScheduleSpec { n_steps: 40, sigma_min: 0.002, sigma_max: 40.0 },
            rho: 2.0,
            window: DEFAULT_WINDOW,
            label_rule: LabelRule::default(),
            n_chains: 256,
            master_seed: 0,
        }
    }

    pub fn oracle(&self) -> Result<PerturbedOracle<GmmOracle>> {
        PerturbedOracle::new(oracle_from_gmm(self.gmm.clone()), self.perturbation.clone())
    }

    /// Robust sampler with this testbed's radius and window.
    pub fn sampler(&self, method: Method, epsilon: f64) -> SamplerConfig {
        SamplerConfig { window: self.window, ..SamplerConfig::rods(method, epsilon, self.rho) }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_chains).map(|c| chain_seed(self.master_seed, c)).collect()
    }

    fn run(&self, config: &SamplerConfig, threads: Option<usize>) -> Result<(TimeSchedule, Vec<TrajectoryRecord>)> {
        let schedule = self.schedule.build()?;
        let inits = chain_inits(self.master_seed, self.n_chains, self.gmm.dim(), schedule.t_max());
        let records = run_chains(&self.oracle()?, &schedule, config, &inits, threads)?;
        Ok((schedule, records))
    }

    /// Detection pass: the robust sampler with an infinite threshold only records `H`, so its
    /// trajectories coincide with plain Euler and the labels are the baseline's.
    pub fn calibrate(&self, threads: Option<usize>) -> Result<Calibration> {
        let (_, records) = self.run(&self.sampler(Method::RodsCas, f64::INFINITY), threads)?;
        let labels = label_records(&self.gmm, &records, &self.label_rule)?;
        let roc = roc_sweep(&records, &labels, &exact_thresholds(&records))?;
        let operating_point = roc
            .threshold_for_tpr(TARGET_TPR)
            .ok_or_else(|| Error::invalid("roc", format!("no threshold reaches TPR {TARGET_TPR}")))?;
        Ok(Calibration { roc, operating_point, n_hallucinated: labels.iter().filter(|&&l| l).count() })
    }

    pub fn experiment(&self, method: Method, epsilon: f64, threads: Option<usize>) -> Result<TestbedOutcome> {
        let (_, baseline) = self.run(&SamplerConfig::euler(), threads)?;
        let (schedule, treatment) = self.run(&self.sampler(method, epsilon), threads)?;
        let critical = critical_step_map(&treatment, epsilon)?;
        let median_critical = median_critical_index(&critical);
        let paired = compare_records(&self.gmm, &self.label_rule, self.master_seed, baseline, treatment)?;
        Ok(TestbedOutcome { paired, critical, median_critical, n_steps: schedule.n_steps() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub roc: RocCurve,
    pub operating_point: RocPoint,
    pub n_hallucinated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestbedOutcome {
    pub paired: PairedExperiment,
    pub critical: Vec<bool>,
    pub median_critical: Option<f64>,
    pub n_steps: usize,
}

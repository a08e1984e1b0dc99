use serde::Serialize;

use super::labels::{label_endpoint, LabelRule};
use super::runner::{chain_inits, chain_seed, run_chains};
use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::oracle::ScoreOracle;
use crate::sampler::{SamplerConfig, TrajectoryRecord};
use crate::schedule::TimeSchedule;

/// Per-sampler summary. The paired rates are `None` for the reference run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub hallucination_rate: f64,
    pub correction_rate: Option<f64>,
    pub new_hallucination_rate: Option<f64>,
    pub mean_wall_time: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairedOutcome {
    /// Hallucinated under the baseline, clean under the treatment.
    Corrected,
    StillHallucinated,
    /// Clean under the baseline, hallucinated under the treatment.
    NewHallucination,
    StillClean,
}

impl PairedOutcome {
    fn of(baseline: bool, treatment: bool) -> Self {
        match (baseline, treatment) {
            (true, false) => PairedOutcome::Corrected,
            (true, true) => PairedOutcome::StillHallucinated,
            (false, true) => PairedOutcome::NewHallucination,
            (false, false) => PairedOutcome::StillClean,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PairedBreakdown {
    pub corrected: usize,
    pub still_hallucinated: usize,
    pub new_hallucinated: usize,
    pub still_clean: usize,
}

impl PairedBreakdown {
    pub fn better(&self) -> usize {
        self.corrected
    }

    pub fn worse(&self) -> usize {
        self.new_hallucinated
    }

    pub fn unchanged(&self) -> usize {
        self.still_hallucinated + self.still_clean
    }

    pub fn baseline_hallucinated(&self) -> usize {
        self.corrected + self.still_hallucinated
    }

    pub fn baseline_clean(&self) -> usize {
        self.new_hallucinated + self.still_clean
    }

    /// Share of baseline hallucinations fixed by the treatment; 0 when there were none.
    pub fn correction_rate(&self) -> f64 {
        ratio(self.corrected, self.baseline_hallucinated())
    }

    /// Share of baseline-clean chains the treatment broke; 0 when there were none.
    pub fn new_hallucination_rate(&self) -> f64 {
        ratio(self.new_hallucinated, self.baseline_clean())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainComparison {
    pub chain_id: usize,
    pub seed: u64,
    pub baseline_endpoint: Vec<f64>,
    pub treatment_endpoint: Vec<f64>,
    pub baseline_neg_log_p0: f64,
    pub treatment_neg_log_p0: f64,
    pub baseline_label: bool,
    pub treatment_label: bool,
    pub outcome: PairedOutcome,
    pub treatment_max_h: f64,
    pub treatment_triggers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairedExperiment {
    pub baseline: RunMetrics,
    pub treatment: RunMetrics,
    pub breakdown: PairedBreakdown,
    pub chains: Vec<ChainComparison>,
    #[serde(skip)]
    pub baseline_records: Vec<TrajectoryRecord>,
    #[serde(skip)]
    pub treatment_records: Vec<TrajectoryRecord>,
}

/// Labels every record's endpoint.
pub fn label_records(gmm: &GaussianMixture, records: &[TrajectoryRecord], rule: &LabelRule) -> Result<Vec<bool>> {
    records.iter().map(|r| label_endpoint(gmm, r.endpoint(), rule)).collect()
}

pub fn run_metrics(records: &[TrajectoryRecord], labels: &[bool]) -> RunMetrics {
    let n = records.len();
    RunMetrics {
        hallucination_rate: ratio(labels.iter().filter(|&&l| l).count(), n),
        correction_rate: None,
        new_hallucination_rate: None,
        mean_wall_time: if n == 0 { 0.0 } else { records.iter().map(|r| r.wall_time).sum::<f64>() / n as f64 },
        n_samples: n,
    }
}

/// Runs `baseline` and `treatment` from the same `n_chains` initial points and compares the
/// labels of each pair of endpoints.
#[allow(clippy::too_many_arguments)]
pub fn run_paired_experiment<O: ScoreOracle + ?Sized>(
    gmm: &GaussianMixture,
    oracle: &O,
    schedule: &TimeSchedule,
    baseline: &SamplerConfig,
    treatment: &SamplerConfig,
    rule: &LabelRule,
    n_chains: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<PairedExperiment> {
    if oracle.dim() != gmm.dim() {
        return Err(Error::DimensionMismatch { expected: gmm.dim(), got: oracle.dim() });
    }
    let inits = chain_inits(master_seed, n_chains, gmm.dim(), schedule.t_max());
    let base_recs = run_chains(oracle, schedule, baseline, &inits, threads)?;
    let treat_recs = run_chains(oracle, schedule, treatment, &inits, threads)?;
    compare_records(gmm, rule, master_seed, base_recs, treat_recs)
}

/// Pairs two equally long, chain-ordered record sets.
pub fn compare_records(
    gmm: &GaussianMixture,
    rule: &LabelRule,
    master_seed: u64,
    baseline_records: Vec<TrajectoryRecord>,
    treatment_records: Vec<TrajectoryRecord>,
) -> Result<PairedExperiment> {
    if baseline_records.len() != treatment_records.len() {
        return Err(Error::invalid("records", "baseline and treatment runs differ in length"));
    }
    let base_labels = label_records(gmm, &baseline_records, rule)?;
    let treat_labels = label_records(gmm, &treatment_records, rule)?;
    let mut breakdown = PairedBreakdown::default();
    let mut chains = Vec::with_capacity(baseline_records.len());
    for (c, (b, t)) in baseline_records.iter().zip(&treatment_records).enumerate() {
        let outcome = PairedOutcome::of(base_labels[c], treat_labels[c]);
        match outcome {
            PairedOutcome::Corrected => breakdown.corrected += 1,
            PairedOutcome::StillHallucinated => breakdown.still_hallucinated += 1,
            PairedOutcome::NewHallucination => breakdown.new_hallucinated += 1,
            PairedOutcome::StillClean => breakdown.still_clean += 1,
        }
        chains.push(ChainComparison {
            chain_id: c,
            seed: chain_seed(master_seed, c),
            baseline_endpoint: b.endpoint().to_vec(),
            treatment_endpoint: t.endpoint().to_vec(),
            baseline_neg_log_p0: gmm.neg_log_p0(b.endpoint())?,
            treatment_neg_log_p0: gmm.neg_log_p0(t.endpoint())?,
            baseline_label: base_labels[c],
            treatment_label: treat_labels[c],
            outcome,
            treatment_max_h: t.max_h(),
            treatment_triggers: t.n_triggers(),
        });
    }
    let mut treatment = run_metrics(&treatment_records, &treat_labels);
    treatment.correction_rate = Some(breakdown.correction_rate());
    treatment.new_hallucination_rate = Some(breakdown.new_hallucination_rate());
    Ok(PairedExperiment {
        baseline: run_metrics(&baseline_records, &base_labels),
        treatment,
        breakdown,
        chains,
        baseline_records,
        treatment_records,
    })
}

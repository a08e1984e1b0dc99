use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::TrajectoryRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// True-positive rate; 0 without positives.
    pub fn tpr(&self) -> f64 {
        rate(self.tp, self.tp + self.fn_)
    }

    /// False-positive rate; 0 without negatives.
    pub fn fpr(&self) -> f64 {
        rate(self.fp, self.fp + self.tn)
    }

    fn add(&mut self, label: bool, detected: bool) {
        match (label, detected) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSample {
    pub seed: u64,
    pub max_h: f64,
    pub label: bool,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub epsilon: f64,
    pub confusion: Confusion,
    pub per_sample: Vec<DetectionSample>,
}

fn check_lengths(records: &[TrajectoryRecord], labels: &[bool]) -> Result<()> {
    if records.len() == labels.len() {
        Ok(())
    } else {
        Err(Error::invalid("labels", format!("{} labels for {} records", labels.len(), records.len())))
    }
}

/// A sample counts as detected when its largest in-window `H` reaches `epsilon`.
pub fn detection_report(
    records: &[TrajectoryRecord],
    labels: &[bool],
    seeds: &[u64],
    epsilon: f64,
) -> Result<DetectionReport> {
    check_lengths(records, labels)?;
    if seeds.len() != records.len() {
        return Err(Error::invalid("seeds", format!("{} seeds for {} records", seeds.len(), records.len())));
    }
    let mut confusion = Confusion::default();
    let per_sample = records
        .iter()
        .zip(labels)
        .zip(seeds)
        .map(|((r, &label), &seed)| {
            let max_h = r.max_h();
            let detected = max_h >= epsilon;
            confusion.add(label, detected);
            DetectionSample { seed, max_h, label, detected }
        })
        .collect();
    Ok(DetectionReport { epsilon, confusion, per_sample })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// All labels were equal, so one of the two rates is undefined (reported as 0).
    pub degenerate: bool,
}

impl RocCurve {
    /// Largest threshold whose TPR reaches `target`, i.e. the most conservative operating
    /// point meeting the sensitivity goal.
    pub fn threshold_for_tpr(&self, target: f64) -> Option<RocPoint> {
        self.points.iter().filter(|p| p.tpr >= target).max_by(|a, b| a.threshold.total_cmp(&b.threshold)).copied()
    }
}

pub fn roc_sweep(records: &[TrajectoryRecord], labels: &[bool], thresholds: &[f64]) -> Result<RocCurve> {
    check_lengths(records, labels)?;
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::invalid("thresholds", "NaN threshold"));
    }
    let stats: Vec<f64> = records.iter().map(TrajectoryRecord::max_h).collect();
    let points = thresholds
        .iter()
        .map(|&threshold| {
            let mut c = Confusion::default();
            for (&h, &label) in stats.iter().zip(labels) {
                c.add(label, h >= threshold);
            }
            RocPoint { threshold, fpr: c.fpr(), tpr: c.tpr() }
        })
        .collect();
    let positives = labels.iter().filter(|&&l| l).count();
    Ok(RocCurve { points, degenerate: positives == 0 || positives == labels.len() })
}

/// Thresholds at which the empirical curve can change: 0, every distinct statistic, and `+inf`.
pub fn exact_thresholds(records: &[TrajectoryRecord]) -> Vec<f64> {
    let mut t: Vec<f64> = records.iter().map(TrajectoryRecord::max_h).collect();
    t.push(0.0);
    t.push(f64::INFINITY);
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// `map[i]` is true when any record has `H ≥ epsilon` at step `i`.
pub fn critical_step_map(records: &[TrajectoryRecord], epsilon: f64) -> Result<Vec<bool>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if records.iter().any(|r| r.times != first.times) {
        return Err(Error::invalid("records", "records do not share one schedule"));
    }
    let mut map = vec![false; first.n_steps()];
    for r in records {
        for (m, &h) in map.iter_mut().zip(&r.h_values) {
            *m |= h >= epsilon;
        }
    }
    Ok(map)
}

/// Median index among the marked steps.
pub fn median_critical_index(map: &[bool]) -> Option<f64> {
    let idx: Vec<usize> = map.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    match idx.len() {
        0 => None,
        n if n % 2 == 1 => Some(idx[n / 2] as f64),
        n => Some(0.5 * (idx[n / 2 - 1] + idx[n / 2]) as f64),
    }
}

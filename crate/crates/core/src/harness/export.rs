//! CSV writers. Rows follow chain or step order, and no timing data is written, so equal
//! inputs always produce byte-identical files.

use std::io::Write;

use super::detection::RocPoint;
use super::metrics::ChainComparison;
use crate::error::Result;
use crate::gmm::GaussianMixture;
use crate::sampler::TrajectoryRecord;

fn coord_headers(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (0..dim).map(move |j| format!("{prefix}x{j}"))
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::invalid("csv", e.to_string())
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"]).map_err(csv_err)?;
    for p in points {
        w.serialize((p.threshold, p.fpr, p.tpr)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_critical_csv<W: Write>(map: &[bool], times: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step_index", "t", "critical"]).map_err(csv_err)?;
    for (i, (&m, &t)) in map.iter().zip(times).enumerate() {
        w.serialize((i, t, u8::from(m))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Endpoint summary: `chain_id, seed, x0.., neg_log_p0, max_h, n_triggers`.
pub fn write_endpoint_csv<W: Write>(
    gmm: &GaussianMixture,
    records: &[TrajectoryRecord],
    seeds: &[u64],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain_id".to_string(), "seed".to_string()];
    header.extend(coord_headers("", gmm.dim()));
    header.extend(["neg_log_p0", "max_h", "n_triggers"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for (c, (r, seed)) in records.iter().zip(seeds).enumerate() {
        let mut row = vec![c.to_string(), seed.to_string()];
        row.extend(r.endpoint().iter().map(|v| fmt(*v)));
        row.push(fmt(gmm.neg_log_p0(r.endpoint())?));
        row.push(fmt(r.max_h()));
        row.push(r.n_triggers().to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Per-chain paired comparison.
pub fn write_comparison_csv<W: Write>(dim: usize, chains: &[ChainComparison], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain_id".to_string(), "seed".to_string()];
    header.extend(coord_headers("baseline_", dim));
    header.extend(coord_headers("treatment_", dim));
    header.extend(
        [
            "baseline_neg_log_p0",
            "treatment_neg_log_p0",
            "baseline_hallucinated",
            "treatment_hallucinated",
            "outcome",
            "treatment_max_h",
            "treatment_triggers",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for c in chains {
        let mut row = vec![c.chain_id.to_string(), c.seed.to_string()];
        row.extend(c.baseline_endpoint.iter().map(|v| fmt(*v)));
        row.extend(c.treatment_endpoint.iter().map(|v| fmt(*v)));
        row.push(fmt(c.baseline_neg_log_p0));
        row.push(fmt(c.treatment_neg_log_p0));
        row.push(c.baseline_label.to_string());
        row.push(c.treatment_label.to_string());
        row.push(serde_json::to_value(c.outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        row.push(fmt(c.treatment_max_h));
        row.push(c.treatment_triggers.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Shortest round-tripping decimal form.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

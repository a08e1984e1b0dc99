mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rods_core::harness::{
    self, chain_inits, chain_seed, compare_records, critical_step_map, detection_report, exact_thresholds,
    label_records, median_critical_index, roc_sweep, run_chains, run_metrics, LabelRule, RunMetrics,
    MIN_CALIBRATION_DRAWS,
};
use rods_core::verify::{run_verify, Suite, VerifyOptions};
use rods_core::{oracle_from_gmm, PerturbedOracle, SamplerConfig, ScoreOracle, TimeSchedule, TrajectoryRecord};
use serde::Serialize;
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "rods", version, about = "Robust diffusion sampling experiments on Gaussian mixtures")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master_seed (or the verify seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for chain sampling. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config's output_dir.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Run a single verify suite: theorem1, theorem2, parameterization or curvature.
    #[arg(long, global = true)]
    filter: Option<Suite>,
    /// Overrides the trigger threshold of `sampler` and of `compare.treatment`.
    #[arg(long, global = true, value_parser = parse_threshold)]
    epsilon: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the numerical identity suite.
    Verify,
    /// Sample chains with `sampler` and export their trajectories.
    Sample,
    /// Paired comparison of `compare.baseline` against `compare.treatment`.
    Compare,
    /// Detection ROC of the curvature index under `sampler`'s probe radius.
    Roc,
    /// Steps at which any chain's index reaches `sampler.epsilon`.
    CriticalSteps,
}

fn parse_threshold(s: &str) -> std::result::Result<f64, String> {
    match rods_core::serde_ext::extended_f64::parse(s) {
        Some(v) if v >= 0.0 => Ok(v),
        _ => Err(format!("expected a non-negative number or \"inf\", got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if cli.filter.is_some() && !matches!(cli.command, Command::Verify) {
        bail!("--filter only applies to verify");
    }
    if cli.threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    if let Command::Verify = cli.command {
        return cmd_verify(cli);
    }
    let path = cli.config.as_deref().ok_or_else(|| anyhow!("this command needs --config"))?;
    let exp = Experiment::new(cli, ExperimentConfig::load(path)?)?;
    match cli.command {
        Command::Verify => unreachable!(),
        Command::Sample => exp.sample(),
        Command::Compare => exp.compare(),
        Command::Roc => exp.roc(),
        Command::CriticalSteps => exp.critical_steps(),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cli: &Cli) -> Result<ExitCode> {
    let out_dir = match (&cli.output_dir, &cli.config) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => ExperimentConfig::load(c)?.output_dir,
        (None, None) => PathBuf::from("out"),
    };
    let opts = VerifyOptions { seed: cli.seed.unwrap_or(0), ..VerifyOptions::default() };
    let report = run_verify(&opts, cli.filter);
    for p in &report.properties {
        println!("{} {} [{}]: {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.suite, p.detail);
    }
    write_json(&out_dir.join("verify_report.json"), &report)?;
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = report.failures().map(|p| p.name.as_str()).collect();
        eprintln!("failing properties: {}", names.join(", "));
        Ok(ExitCode::FAILURE)
    }
}

struct Experiment {
    cfg: ExperimentConfig,
    oracle: Box<dyn ScoreOracle>,
    schedule: TimeSchedule,
    label_rule: LabelRule,
    threads: Option<usize>,
    out_dir: PathBuf,
    epsilon: Option<f64>,
}

impl Experiment {
    fn new(cli: &Cli, mut cfg: ExperimentConfig) -> Result<Self> {
        if let Some(seed) = cli.seed {
            cfg.master_seed = seed;
        }
        let base = oracle_from_gmm(cfg.gmm.clone());
        let oracle: Box<dyn ScoreOracle> = match &cfg.perturbation {
            Some(p) => Box::new(PerturbedOracle::new(base, p.clone())?),
            None => Box::new(base),
        };
        let schedule = cfg.schedule.build()?;
        let label_rule = cfg.label_rule.calibrate(&cfg.gmm, MIN_CALIBRATION_DRAWS, cfg.master_seed)?;
        let out_dir = cli.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Self { cfg, oracle, schedule, label_rule, threads: cli.threads, out_dir, epsilon: cli.epsilon })
    }

    fn sampler(&self) -> Result<SamplerConfig> {
        let mut s = self.cfg.sampler.clone().ok_or_else(|| anyhow!("config has no `sampler` block"))?;
        if let Some(e) = self.epsilon {
            s.epsilon = e;
        }
        Ok(s)
    }

    fn seeds(&self) -> Vec<u64> {
        (0..self.cfg.n_chains).map(|c| chain_seed(self.cfg.master_seed, c)).collect()
    }

    fn run(&self, sampler: &SamplerConfig) -> Result<Vec<TrajectoryRecord>> {
        let inits = chain_inits(self.cfg.master_seed, self.cfg.n_chains, self.cfg.gmm.dim(), self.schedule.t_max());
        Ok(run_chains(&self.oracle, &self.schedule, sampler, &inits, self.threads)?)
    }

    fn labels(&self, records: &[TrajectoryRecord]) -> Result<Vec<bool>> {
        Ok(label_records(&self.cfg.gmm, records, &self.label_rule)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn sample(&self) -> Result<()> {
        let sampler = self.sampler()?;
        let records = self.run(&sampler)?;
        let labels = self.labels(&records)?;
        let seeds = self.seeds();
        for (c, r) in records.iter().enumerate() {
            write_atomic(&self.path(&format!("trajectories/chain_{c:04}.jsonl")), |w| Ok(r.write_jsonl(w)?))?;
        }
        write_atomic(&self.path("endpoints.csv"), |w| {
            Ok(harness::export::write_endpoint_csv(&self.cfg.gmm, &records, &seeds, w)?)
        })?;
        let metrics = run_metrics(&records, &labels);
        write_json(
            &self.path("sample_report.json"),
            &json!({
                "master_seed": self.cfg.master_seed,
                "n_chains": self.cfg.n_chains,
                "sampler": sampler,
                "metrics": deterministic(&metrics)?,
            }),
        )?;
        write_timing(&self.path("timing.json"), &[("sampler", &metrics)])?;
        println!("{} chains, hallucination rate {:.4}", records.len(), metrics.hallucination_rate);
        Ok(())
    }

    fn compare(&self) -> Result<()> {
        let block = self.cfg.compare.as_ref().ok_or_else(|| anyhow!("config has no `compare` block"))?;
        let mut treatment = block.treatment.clone();
        if let Some(e) = self.epsilon {
            treatment.epsilon = e;
        }
        let base_recs = self.run(&block.baseline)?;
        let treat_recs = self.run(&treatment)?;
        let exp = compare_records(&self.cfg.gmm, &self.label_rule, self.cfg.master_seed, base_recs, treat_recs)?;
        write_atomic(&self.path("compare_chains.csv"), |w| {
            Ok(harness::export::write_comparison_csv(self.cfg.gmm.dim(), &exp.chains, w)?)
        })?;
        let b = &exp.breakdown;
        write_json(
            &self.path("compare_report.json"),
            &json!({
                "master_seed": self.cfg.master_seed,
                "n_chains": self.cfg.n_chains,
                "baseline_config": block.baseline,
                "treatment_config": treatment,
                "baseline": deterministic(&exp.baseline)?,
                "treatment": deterministic(&exp.treatment)?,
                "breakdown": {
                    "corrected": b.corrected,
                    "still_hallucinated": b.still_hallucinated,
                    "new_hallucinated": b.new_hallucinated,
                    "still_clean": b.still_clean,
                    "better": b.better(),
                    "worse": b.worse(),
                    "unchanged": b.unchanged(),
                },
            }),
        )?;
        write_timing(&self.path("timing.json"), &[("baseline", &exp.baseline), ("treatment", &exp.treatment)])?;
        println!(
            "hallucination rate {:.4} -> {:.4}; correction rate {:.4}; new hallucination rate {:.4}",
            exp.baseline.hallucination_rate,
            exp.treatment.hallucination_rate,
            b.correction_rate(),
            b.new_hallucination_rate()
        );
        Ok(())
    }

    fn roc(&self) -> Result<()> {
        let mut sampler = self.sampler()?;
        if !sampler.method.is_robust() {
            bail!("roc needs a robust sampler (rods_sas or rods_cas) to compute the index");
        }
        // detection only: the index is recorded but never acted on
        sampler.epsilon = f64::INFINITY;
        let records = self.run(&sampler)?;
        let labels = self.labels(&records)?;
        let thresholds = match &self.cfg.roc.thresholds {
            Some(t) => t.iter().map(|v| v.0).collect(),
            None => exact_thresholds(&records),
        };
        let curve = roc_sweep(&records, &labels, &thresholds)?;
        write_atomic(&self.path("roc.csv"), |w| Ok(harness::export::write_roc_csv(&curve.points, w)?))?;
        let target = self.cfg.roc.target_tpr;
        let point = curve.threshold_for_tpr(target);
        if let Some(p) = point {
            write_json(
                &self.path("detection_report.json"),
                &detection_report(&records, &labels, &self.seeds(), p.threshold)?,
            )?;
        }
        let n_hallucinated = labels.iter().filter(|&&l| l).count();
        write_json(
            &self.path("roc_summary.json"),
            &json!({
                "master_seed": self.cfg.master_seed,
                "n_chains": self.cfg.n_chains,
                "n_hallucinated": n_hallucinated,
                "detection_radius": sampler.detection_radius(),
                "target_tpr": target,
                "degenerate": curve.degenerate,
                "epsilon": point.map(|p| p.threshold),
                "tpr": point.map(|p| p.tpr),
                "fpr": point.map(|p| p.fpr),
            }),
        )?;
        match point {
            Some(p) => println!(
                "epsilon {} reaches TPR {:.4} at FPR {:.4} ({n_hallucinated} hallucinated)",
                p.threshold, p.tpr, p.fpr
            ),
            None => println!("no threshold reaches TPR {target} ({n_hallucinated} hallucinated)"),
        }
        Ok(())
    }

    fn critical_steps(&self) -> Result<()> {
        let sampler = self.sampler()?;
        let records = self.run(&sampler)?;
        let map = critical_step_map(&records, sampler.epsilon)?;
        write_atomic(&self.path("critical_steps.csv"), |w| {
            Ok(harness::export::write_critical_csv(&map, self.schedule.times(), w)?)
        })?;
        let marked: Vec<usize> = map.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        let median = median_critical_index(&map);
        let n = self.schedule.n_steps();
        write_json(
            &self.path("critical_summary.json"),
            &json!({
                "epsilon": if sampler.epsilon.is_finite() { json!(sampler.epsilon) } else { json!("inf") },
                "n_steps": n,
                "marked": marked,
                "median_index": median,
                "median_fraction": median.map(|m| m / n as f64),
            }),
        )?;
        match median {
            Some(m) => println!("{} critical steps of {n}; median index {m}", marked.len()),
            None => println!("no critical steps"),
        }
        Ok(())
    }
}

/// JSON of `metrics` without the wall time, which differs between runs.
fn deterministic(metrics: &RunMetrics) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(metrics)?;
    if let Some(o) = v.as_object_mut() {
        o.remove("mean_wall_time");
    }
    Ok(v)
}

fn write_timing(path: &Path, runs: &[(&str, &RunMetrics)]) -> Result<()> {
    let map: serde_json::Map<String, serde_json::Value> =
        runs.iter().map(|(name, m)| (format!("{name}_mean_wall_time"), json!(m.mean_wall_time))).collect();
    write_json(path, &map)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Writes through a temporary file in the destination directory and renames it into place,
/// so readers never observe a partial file.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<&mut fs::File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

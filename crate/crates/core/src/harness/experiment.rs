use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::Result;

use super::config::{ExperimentConfig, OutputFormat, SplitRule};
use super::replicate::{run_replicate, ReplicateResult};
use super::{fmt_bool, fmt_f64, fmt_opt_bool, with_parallelism, VERSION};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetitorSummary {
    pub procedure_id: u32,
    pub mean_d_h: f64,
    pub lemma1_event_frequency: f64,
    pub mean_lemma1_bound: f64,
    pub failed_fits: usize,
}

/// Aggregate over the R replicates of one (n, split rule) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveEntry {
    pub n: usize,
    pub split: SplitRule,
    pub n1: usize,
    pub n2: usize,
    pub replicates: usize,
    /// P̂(winner = best).
    pub selection_probability: f64,
    /// √(p̂(1 − p̂)/R).
    pub std_error: f64,
    pub tie_fraction: f64,
    pub best_mean_d_h: f64,
    pub mean_m_ratio: f64,
    pub mean_remark4_ratio: f64,
    pub cond2_fraction: f64,
    pub cond3_fraction: f64,
    pub mean_misselection_bound: f64,
    pub mean_chebyshev_bound: f64,
    pub w_event_frequency: f64,
    /// Among replicates where condition (3) held.
    pub cond3_replicates: usize,
    pub misselection_frequency_given_cond3: f64,
    pub misselection_std_error_given_cond3: f64,
    pub mean_misselection_bound_given_cond3: f64,
    pub competitors: Vec<CompetitorSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<ReplicateResult>,
    pub curve: Vec<CurveEntry>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary<'a> {
    pub experiment_id: &'a str,
    pub code_version: &'a str,
    pub base_seed: u64,
    pub config: &'a ExperimentConfig,
    pub curve: &'a [CurveEntry],
}

pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub timing: PathBuf,
}

/// Runs every (n, split rule, replicate) cell on `parallelism` threads.
/// Results are identical for any thread count.
pub fn run_experiment(cfg: &ExperimentConfig, parallelism: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let truth = cfg.truth.build()?;
    let cells: Vec<(usize, SplitRule, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| {
            cfg.split_rules
                .iter()
                .flat_map(move |&rule| (0..cfg.replicates).map(move |r| (n, rule, r)))
        })
        .collect();
    let rows = with_parallelism(parallelism, || {
        cells
            .par_iter()
            .map(|&(n, rule, r)| run_replicate(cfg, &truth, n, rule, r))
            .collect::<Result<Vec<_>>>()
    })??;
    let curve = rows.chunks(cfg.replicates).map(|chunk| aggregate(cfg, chunk)).collect();
    Ok(ExperimentOutput {
        config: cfg.clone(),
        rows,
        curve,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn frac(values: impl Iterator<Item = bool>) -> f64 {
    mean(values.map(|b| if b { 1.0 } else { 0.0 }))
}

pub fn binomial_se(p: f64, k: usize) -> f64 {
    if k == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / k as f64).sqrt()
}

fn aggregate(cfg: &ExperimentConfig, rows: &[ReplicateResult]) -> CurveEntry {
    let first = &rows[0];
    let k = rows.len();
    let p = frac(rows.iter().map(|r| !r.misselected()));
    let best_outcomes = rows.iter().filter_map(|r| r.outcome(cfg.best_procedure_id)?.divergence);
    let with_cond3: Vec<&ReplicateResult> = rows.iter().filter(|r| r.cond3_pass() == Some(true)).collect();
    let mis_cond3 = frac(with_cond3.iter().map(|r| r.misselected()));
    let competitors = cfg
        .procedures
        .iter()
        .filter(|p| p.id != cfg.best_procedure_id)
        .map(|p| {
            let outs: Vec<_> = rows.iter().filter_map(|r| r.outcome(p.id)).collect();
            CompetitorSummary {
                procedure_id: p.id,
                mean_d_h: mean(outs.iter().filter_map(|o| o.divergence.map(|d| d.d_h))),
                lemma1_event_frequency: frac(outs.iter().filter_map(|o| o.lemma1_event)),
                mean_lemma1_bound: mean(outs.iter().filter_map(|o| o.lemma1_bound)),
                failed_fits: outs.iter().filter(|o| o.fit_error.is_some()).count(),
            }
        })
        .collect();
    CurveEntry {
        n: first.n,
        split: first.split,
        n1: first.n1,
        n2: first.n2,
        replicates: k,
        selection_probability: p,
        std_error: binomial_se(p, k),
        tie_fraction: frac(rows.iter().map(|r| r.tie)),
        best_mean_d_h: mean(best_outcomes.clone().map(|d| d.d_h)),
        mean_m_ratio: mean(best_outcomes.filter_map(|d| d.m_ratio).filter(|m| m.is_finite())),
        mean_remark4_ratio: mean(rows.iter().filter_map(|r| r.remark4_ratio).filter(|m| m.is_finite())),
        cond2_fraction: frac(rows.iter().map(|r| r.cond2_holds() == Some(true))),
        cond3_fraction: frac(rows.iter().map(|r| r.cond3_pass() == Some(true))),
        mean_misselection_bound: mean(rows.iter().filter_map(|r| r.bounds.as_ref().map(|b| b.misselection_bound))),
        mean_chebyshev_bound: mean(rows.iter().filter_map(|r| r.bounds.as_ref().map(|b| b.chebyshev_bound))),
        w_event_frequency: frac(rows.iter().filter_map(|r| r.w_event)),
        cond3_replicates: with_cond3.len(),
        misselection_frequency_given_cond3: mis_cond3,
        misselection_std_error_given_cond3: binomial_se(mis_cond3, with_cond3.len()),
        mean_misselection_bound_given_cond3: mean(
            with_cond3.iter().filter_map(|r| r.bounds.as_ref().map(|b| b.misselection_bound)),
        ),
        competitors,
    }
}

pub const CSV_HEADER: [&str; 18] = [
    "experiment_id",
    "n",
    "n1",
    "n2",
    "replicate",
    "procedure_id",
    "d_H",
    "d_K",
    "V",
    "M_ratio",
    "score",
    "floor_hits",
    "is_winner",
    "cond1",
    "cond2_stat",
    "cond3_pass",
    "lemma1_event",
    "W_event",
];

impl ExperimentOutput {
    /// One CSV row per (replicate, procedure).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let cond2 = row
                .bounds
                .as_ref()
                .and_then(|b| b.conditions.cond2.as_ref())
                .map(|c| fmt_f64(c.stat))
                .unwrap_or_default();
            let cond3 = row.cond3_pass().map(fmt_bool).unwrap_or_default();
            for p in &row.procedures {
                let d = p.divergence;
                w.write_record([
                    self.config.experiment_id.clone(),
                    row.n.to_string(),
                    row.n1.to_string(),
                    row.n2.to_string(),
                    row.replicate.to_string(),
                    p.procedure_id.to_string(),
                    d.map(|d| fmt_f64(d.d_h)).unwrap_or_default(),
                    d.map(|d| fmt_f64(d.d_k)).unwrap_or_default(),
                    d.map(|d| fmt_f64(d.v)).unwrap_or_default(),
                    d.and_then(|d| d.m_ratio).map(fmt_f64).unwrap_or_default(),
                    fmt_f64(p.score),
                    p.floor_hits.to_string(),
                    fmt_bool(p.procedure_id == row.winner),
                    row.n1.min(row.n2).to_string(),
                    cond2.clone(),
                    cond3.clone(),
                    fmt_opt_bool(p.lemma1_event),
                    fmt_opt_bool(row.w_event),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> ExperimentSummary<'_> {
        ExperimentSummary {
            experiment_id: &self.config.experiment_id,
            code_version: VERSION,
            base_seed: self.config.base_seed,
            config: &self.config,
            curve: &self.curve,
        }
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())? + "\n")
    }

    /// Writes `<id>.replicates.csv` and `<id>.summary.json` (per the configured
    /// formats) plus `<id>.timing.json`, which holds the only run-dependent value.
    pub fn write_to(&self, dir: &Path) -> Result<OutputPaths> {
        std::fs::create_dir_all(dir)?;
        let id = &self.config.experiment_id;
        let formats = &self.config.output.formats;
        let csv = if formats.contains(&OutputFormat::Csv) {
            let path = dir.join(format!("{id}.replicates.csv"));
            self.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            Some(path)
        } else {
            None
        };
        let summary = if formats.contains(&OutputFormat::Json) {
            let path = dir.join(format!("{id}.summary.json"));
            std::fs::write(&path, self.summary_json()?)?;
            Some(path)
        } else {
            None
        };
        let timing = dir.join(format!("{id}.timing.json"));
        std::fs::write(
            &timing,
            serde_json::to_string_pretty(&serde_json::json!({
                "experiment_id": id,
                "wall_clock_seconds": self.wall_clock_seconds,
            }))? + "\n",
        )?;
        Ok(OutputPaths { csv, summary, timing })
    }
}

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv_select::{holdout_log_likelihood, select_from_scores, ScoreEntry};
use crate::divergences::{divergence_report, empirical_kl, DivergenceReport};
use crate::estimators::{FittedDensity, ProcedureSpec};
use crate::quadrature::{QuadratureGrid, DEFAULT_POINTS};
use crate::rng::mix;
use crate::theory::{chebyshev_w_bound, lemma1_tail_bound, misselection_bound, TheoremInputs};
use crate::truth::{sample_truth_seeded, TrueDensity, TruthSpec};
use crate::{Density, Error, Result};

use super::experiment::binomial_se;
use super::{fmt_bool, fmt_f64, with_parallelism, VERSION};

/// Salt separating frozen-training draws from holdout draws.
const TRAINING_TAG: u64 = 0x7472_6169_6e00_0000;

/// A procedure fitted once on a frozen training sample of size `n1`.
/// `fixed` procedures ignore the sample, so `n1` may be 0 for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenProcedure {
    pub procedure: ProcedureSpec,
    #[serde(default)]
    pub n1: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCell {
    pub n2: usize,
    pub c: f64,
}

fn default_t_exponent() -> f64 {
    1.0 / 3.0
}
fn default_points() -> usize {
    DEFAULT_POINTS
}
fn default_m_max() -> f64 {
    100.0
}

/// Conditional (frozen X¹) verification of the tail bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub experiment_id: String,
    pub truth: TruthSpec,
    /// The procedure playing index 1; enables the W and misselection rows.
    #[serde(default)]
    pub best: Option<FrozenProcedure>,
    pub competitors: Vec<FrozenProcedure>,
    pub cells: Vec<BoundCell>,
    /// t = n₂^(−t_exponent).
    #[serde(default = "default_t_exponent")]
    pub t_exponent: f64,
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(default = "default_points")]
    pub quadrature_points: usize,
    #[serde(default = "default_m_max")]
    pub m_max: f64,
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return bad(format!("experiment_id must be a file-name-safe token, got {:?}", self.experiment_id));
        }
        self.truth.validate()?;
        let mut specs: Vec<ProcedureSpec> = self.best.iter().map(|b| b.procedure.clone()).collect();
        specs.extend(self.competitors.iter().map(|c| c.procedure.clone()));
        if specs.is_empty() {
            return Err(Error::NoProcedures);
        }
        // Competitors may be numbered from 2 without a best procedure, so ids
        // need only be distinct here.
        let mut ids: Vec<u32> = specs.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad(format!("procedure ids must be distinct, got {ids:?}"));
        }
        for spec in &specs {
            spec.procedure.validate()?;
        }
        if self.cells.is_empty() {
            return bad("cells is empty".into());
        }
        for cell in &self.cells {
            if cell.n2 == 0 || !(cell.c > 0.0 && cell.c < 1.0) {
                return bad(format!("cell needs n2 >= 1 and c in (0, 1), got {cell:?}"));
            }
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.t_exponent > 0.0) || !(self.m_max > 0.0) {
            return bad("t_exponent and m_max must be positive".into());
        }
        if self.quadrature_points < 3 || self.quadrature_points.is_multiple_of(2) {
            return bad("quadrature_points must be odd and >= 3".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lemma1,
    W,
    Misselection,
}

impl BoundKind {
    fn name(self) -> &'static str {
        match self {
            BoundKind::Lemma1 => "lemma1",
            BoundKind::W => "W",
            BoundKind::Misselection => "misselection",
        }
    }
}

/// Monte Carlo frequency of one event against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub n2: usize,
    pub c: f64,
    pub event: BoundKind,
    /// Competitor id for lemma-1 rows.
    pub procedure_id: Option<u32>,
    pub v_sq: Option<f64>,
    pub t: Option<f64>,
    pub replicates: usize,
    pub frequency: f64,
    pub std_error: f64,
    pub bound: f64,
    /// frequency ≤ bound + 3·se.
    pub within_3se: bool,
    /// For misselection rows: condition (3) held for the frozen fits.
    pub valid: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct FrozenFit {
    pub fit: FittedDensity,
    pub divergence: DivergenceReport,
}

#[derive(Debug, Clone)]
pub struct BoundVerification {
    pub config: BoundConfig,
    pub best: Option<FrozenFit>,
    pub competitors: Vec<FrozenFit>,
    pub rows: Vec<BoundRow>,
}

fn freeze(cfg: &BoundConfig, truth: &TrueDensity, frozen: &FrozenProcedure) -> Result<FrozenFit> {
    let seed = mix(cfg.base_seed, &[TRAINING_TAG, frozen.procedure.id as u64]);
    let train = sample_truth_seeded(truth, frozen.n1, seed);
    let fit = frozen.procedure.fit(&train)?;
    let grid = QuadratureGrid::covering(&[truth as &dyn Density, &fit], cfg.quadrature_points)?;
    let divergence = divergence_report(truth, &fit, &grid)?;
    Ok(FrozenFit { fit, divergence })
}

/// Holdout seed for (n₂, r); cells sharing n₂ share holdouts.
pub fn holdout_seed(base_seed: u64, n2: usize, r: usize) -> u64 {
    mix(base_seed, &[n2 as u64, r as u64])
}

struct Events {
    lemma1: Vec<bool>,
    w: Option<bool>,
    misselected: Option<bool>,
}

/// Fits once on frozen training samples, then draws R fresh holdouts per cell.
pub fn run_bound_verification(cfg: &BoundConfig, parallelism: usize) -> Result<BoundVerification> {
    cfg.validate()?;
    let truth = cfg.truth.build()?;
    let best = cfg.best.as_ref().map(|b| freeze(cfg, &truth, b)).transpose()?;
    let competitors = cfg
        .competitors
        .iter()
        .map(|c| freeze(cfg, &truth, c))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for cell in &cfg.cells {
        let n2 = cell.n2;
        let c = cell.c;
        let t = (n2 as f64).powf(-cfg.t_exponent);
        let v_sq: Vec<f64> = competitors.iter().map(|f| f.divergence.d_h.powi(2)).collect();

        let events = with_parallelism(parallelism, || {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let holdout = sample_truth_seeded(&truth, n2, holdout_seed(cfg.base_seed, n2, r));
                    let truth_score = holdout_log_likelihood(&truth, &holdout)?.score;
                    let mut entries = Vec::new();
                    let mut lemma1 = Vec::with_capacity(competitors.len());
                    for (k, comp) in competitors.iter().enumerate() {
                        let s = holdout_log_likelihood(&comp.fit, &holdout)?;
                        lemma1.push(s.score - truth_score >= -(n2 as f64) * c * v_sq[k]);
                        entries.push(ScoreEntry {
                            procedure_id: comp.fit.procedure_id,
                            score: s.score,
                            floor_hits: s.floor_hits,
                        });
                    }
                    let (w, misselected) = match &best {
                        Some(b) => {
                            let d = b.divergence;
                            let ekl = empirical_kl(&truth, &b.fit, &holdout)?;
                            let w = d.v > 0.0 && d.v.is_finite() && (ekl - d.d_k) / d.v >= t;
                            let s = holdout_log_likelihood(&b.fit, &holdout)?;
                            entries.push(ScoreEntry {
                                procedure_id: b.fit.procedure_id,
                                score: s.score,
                                floor_hits: s.floor_hits,
                            });
                            let mis = if competitors.is_empty() {
                                None
                            } else {
                                Some(select_from_scores(entries)?.winner != b.fit.procedure_id)
                            };
                            (Some(w), mis)
                        }
                        None => (None, None),
                    };
                    Ok(Events { lemma1, w, misselected })
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let r_count = events.len();

        for (k, comp) in competitors.iter().enumerate() {
            let freq = frequency(events.iter().map(|e| e.lemma1[k]));
            let se = binomial_se(freq, r_count);
            let bound = lemma1_tail_bound(n2, v_sq[k], c * v_sq[k]);
            rows.push(BoundRow {
                n2,
                c,
                event: BoundKind::Lemma1,
                procedure_id: Some(comp.fit.procedure_id),
                v_sq: Some(v_sq[k]),
                t: None,
                replicates: r_count,
                frequency: freq,
                std_error: se,
                bound,
                within_3se: freq <= bound + 3.0 * se,
                valid: None,
            });
        }

        if let Some(b) = &best {
            let freq = frequency(events.iter().filter_map(|e| e.w));
            let se = binomial_se(freq, r_count);
            let bound = chebyshev_w_bound(n2, t);
            rows.push(BoundRow {
                n2,
                c,
                event: BoundKind::W,
                procedure_id: Some(b.fit.procedure_id),
                v_sq: Some(b.divergence.d_h.powi(2)),
                t: Some(t),
                replicates: r_count,
                frequency: freq,
                std_error: se,
                bound,
                within_3se: freq <= bound + 3.0 * se,
                valid: None,
            });

            if !competitors.is_empty() {
                let v1 = b.divergence.d_h.powi(2);
                let m_const = match b.divergence.m_ratio {
                    None => 0.0,
                    Some(m) if m.is_finite() => m.min(cfg.m_max),
                    Some(_) => cfg.m_max,
                };
                let mut all_v = vec![v1];
                all_v.extend(&v_sq);
                let n1 = cfg.best.as_ref().map_or(0, |f| f.n1);
                let inputs = TheoremInputs {
                    n1,
                    n2,
                    m: all_v.len(),
                    v_sq: all_v,
                    s: b.divergence.v,
                    m_const,
                    c,
                    t,
                };
                let mb = misselection_bound(&inputs)?;
                let freq = frequency(events.iter().filter_map(|e| e.misselected));
                let se = binomial_se(freq, r_count);
                rows.push(BoundRow {
                    n2,
                    c,
                    event: BoundKind::Misselection,
                    procedure_id: None,
                    v_sq: inputs.min_competitor_v_sq(),
                    t: Some(t),
                    replicates: r_count,
                    frequency: freq,
                    std_error: se,
                    bound: mb.bound,
                    within_3se: freq <= mb.bound + 3.0 * se,
                    valid: Some(mb.valid),
                });
            }
        }
    }

    Ok(BoundVerification {
        config: cfg.clone(),
        best,
        competitors,
        rows,
    })
}

fn frequency(events: impl Iterator<Item = bool>) -> f64 {
    let (hits, total) = events.fold((0usize, 0usize), |(h, t), e| (h + e as usize, t + 1));
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

pub const BOUND_CSV_HEADER: [&str; 12] = [
    "experiment_id",
    "n2",
    "c",
    "event",
    "procedure_id",
    "v_sq",
    "t",
    "replicates",
    "frequency",
    "std_error",
    "bound",
    "within_3se",
];

impl BoundVerification {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BOUND_CSV_HEADER)?;
        for row in &self.rows {
            w.write_record([
                self.config.experiment_id.clone(),
                row.n2.to_string(),
                fmt_f64(row.c),
                row.event.name().to_string(),
                row.procedure_id.map(|i| i.to_string()).unwrap_or_default(),
                row.v_sq.map(fmt_f64).unwrap_or_default(),
                row.t.map(fmt_f64).unwrap_or_default(),
                row.replicates.to_string(),
                fmt_f64(row.frequency),
                fmt_f64(row.std_error),
                fmt_f64(row.bound),
                fmt_bool(row.within_3se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let fits = |f: &FrozenFit| {
            serde_json::json!({
                "procedure_id": f.fit.procedure_id,
                "divergence": f.divergence,
            })
        };
        let value = serde_json::json!({
            "experiment_id": self.config.experiment_id,
            "code_version": VERSION,
            "base_seed": self.config.base_seed,
            "config": self.config,
            "frozen_best": self.best.as_ref().map(fits),
            "frozen_competitors": self.competitors.iter().map(fits).collect::<Vec<_>>(),
            "bounds": self.rows,
        });
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let id = &self.config.experiment_id;
        let csv = dir.join(format!("{id}.bounds.csv"));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
        let json = dir.join(format!("{id}.bounds.json"));
        std::fs::write(&json, self.summary_json()?)?;
        Ok((csv, json))
    }
}

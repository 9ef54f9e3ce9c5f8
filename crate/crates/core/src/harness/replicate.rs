use serde::Serialize;

use crate::cv_select::{holdout_log_likelihood, make_split, select_from_scores, ScoreEntry, SplitMode};
use crate::divergences::{divergence_report, empirical_kl, DivergenceReport};
use crate::estimators::{fit, FittedDensity};
use crate::quadrature::QuadratureGrid;
use crate::rng::mix;
use crate::theory::{bound_report, BoundReport, TheoremInputs};
use crate::truth::{sample_truth_seeded, TrueDensity};
use crate::{Density, Result};

use super::config::{ExperimentConfig, SplitModeSetting, SplitRule};

/// Per-procedure part of a replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcedureOutcome {
    pub procedure_id: u32,
    /// `None` when the fit failed.
    pub divergence: Option<DivergenceReport>,
    /// Holdout log-likelihood; `-inf` for a failed fit.
    pub score: f64,
    pub floor_hits: usize,
    pub fit_error: Option<String>,
    /// Competitor's holdout ratio against p₀ reached exp(−n₂·c·v²).
    pub lemma1_event: Option<bool>,
    pub lemma1_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub split: SplitRule,
    pub replicate: usize,
    pub procedures: Vec<ProcedureOutcome>,
    pub winner: u32,
    pub tie: bool,
    pub best_procedure_id: u32,
    pub t: f64,
    /// `None` when the best procedure's fit failed.
    pub theorem_inputs: Option<TheoremInputs>,
    pub bounds: Option<BoundReport>,
    /// (d_K^(n₂) − d_K)/V ≥ t for the best procedure.
    pub w_event: Option<bool>,
    /// s / v²₁, the V = O(d_H²) diagnostic.
    pub remark4_ratio: Option<f64>,
}

impl ReplicateResult {
    pub fn misselected(&self) -> bool {
        self.winner != self.best_procedure_id
    }

    pub fn cond3_pass(&self) -> Option<bool> {
        self.bounds.as_ref().map(|b| b.conditions.cond3.pass)
    }

    pub fn cond2_holds(&self) -> Option<bool> {
        self.bounds
            .as_ref()
            .and_then(|b| b.conditions.cond2.as_ref())
            .map(|c| c.holds)
    }

    pub fn outcome(&self, id: u32) -> Option<&ProcedureOutcome> {
        self.procedures.iter().find(|p| p.procedure_id == id)
    }
}

/// Seed of the sample for (n, r); shared by every split rule.
pub fn sample_seed(base_seed: u64, n: usize, r: usize) -> u64 {
    mix(base_seed, &[n as u64, r as u64])
}

/// One draw → split → fit → score → select → theory pass.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    truth: &TrueDensity,
    n: usize,
    split: SplitRule,
    r: usize,
) -> Result<ReplicateResult> {
    let seed = sample_seed(cfg.base_seed, n, r);
    let sample = sample_truth_seeded(truth, n, seed);
    let n1 = split.n1_for(n)?;
    let mode = match cfg.split_mode {
        SplitModeSetting::Sequential => SplitMode::Sequential,
        SplitModeSetting::Random => SplitMode::Random {
            seed: mix(seed, &[n1 as u64]),
        },
    };
    let plan = make_split(n, n1, mode)?;
    let (train, holdout) = plan.apply(&sample)?;
    let n2 = plan.n2;
    let t = cfg.theory.t_for(n2);
    let c = cfg.theory.c;

    let truth_score = holdout_log_likelihood(truth, &holdout)?.score;

    let mut fits: Vec<Option<FittedDensity>> = Vec::with_capacity(cfg.procedures.len());
    let mut outcomes = Vec::with_capacity(cfg.procedures.len());
    for spec in &cfg.procedures {
        let attempt = fit(spec, &train).and_then(|f| {
            let grid = QuadratureGrid::covering(&[truth as &dyn Density, &f], cfg.quadrature_points)?;
            let report = divergence_report(truth, &f, &grid)?;
            let score = holdout_log_likelihood(&f, &holdout)?;
            Ok((f, report, score))
        });
        match attempt {
            Ok((f, report, score)) => {
                fits.push(Some(f));
                outcomes.push(ProcedureOutcome {
                    procedure_id: spec.id,
                    divergence: Some(report),
                    score: score.score,
                    floor_hits: score.floor_hits,
                    fit_error: None,
                    lemma1_event: None,
                    lemma1_bound: None,
                });
            }
            Err(e) => {
                log::debug!("n={n} r={r}: procedure {} failed: {e}", spec.id);
                fits.push(None);
                outcomes.push(ProcedureOutcome {
                    procedure_id: spec.id,
                    divergence: None,
                    score: f64::NEG_INFINITY,
                    floor_hits: 0,
                    fit_error: Some(e.to_string()),
                    lemma1_event: None,
                    lemma1_bound: None,
                });
            }
        }
    }

    let selection = select_from_scores(
        outcomes
            .iter()
            .map(|o| ScoreEntry {
                procedure_id: o.procedure_id,
                score: o.score,
                floor_hits: o.floor_hits,
            })
            .collect(),
    )?;

    let best = cfg.best_procedure_id;
    let best_pos = cfg.procedures.iter().position(|p| p.id == best).expect("validated");
    let mut theorem_inputs = None;
    let mut bounds = None;
    let mut w_event = None;
    let mut remark4_ratio = None;

    if let (Some(best_fit), Some(best_report)) = (&fits[best_pos], outcomes[best_pos].divergence) {
        let v1 = best_report.d_h * best_report.d_h;
        let m_const = match best_report.m_ratio {
            None => 0.0,
            Some(ratio) if ratio.is_finite() && ratio <= cfg.theory.m_max => ratio,
            Some(ratio) => {
                log::warn!("n={n} r={r}: measured M ratio {ratio} capped at {}", cfg.theory.m_max);
                cfg.theory.m_max
            }
        };
        // Failed competitors cannot be selected and carry no loss; they are left out.
        let competitors: Vec<usize> = (0..outcomes.len())
            .filter(|&k| k != best_pos && outcomes[k].divergence.is_some())
            .collect();
        let mut v_sq = vec![v1];
        v_sq.extend(competitors.iter().map(|&k| outcomes[k].divergence.unwrap().d_h.powi(2)));
        let inputs = TheoremInputs {
            n1,
            n2,
            m: v_sq.len(),
            v_sq,
            s: best_report.v,
            m_const,
            c,
            t,
        };
        if let Ok(report) = bound_report(&inputs) {
            bounds = Some(report);
        }
        for &k in &competitors {
            let v = outcomes[k].divergence.unwrap().d_h.powi(2);
            let o = &mut outcomes[k];
            o.lemma1_event = Some(o.score - truth_score >= -(n2 as f64) * c * v);
            o.lemma1_bound = Some(crate::theory::lemma1_tail_bound(n2, v, c * v));
        }
        let ekl = empirical_kl(truth, best_fit, &holdout)?;
        w_event = Some(if best_report.v > 0.0 && best_report.v.is_finite() {
            (ekl - best_report.d_k) / best_report.v >= t
        } else {
            false
        });
        remark4_ratio = (v1 > 0.0).then(|| best_report.v / v1);
        theorem_inputs = Some(inputs);
    }

    Ok(ReplicateResult {
        n,
        n1,
        n2,
        split,
        replicate: r,
        procedures: outcomes,
        winner: selection.winner,
        tie: selection.tie_flag,
        best_procedure_id: best,
        t,
        theorem_inputs,
        bounds,
        w_event,
        remark4_ratio,
    })
}

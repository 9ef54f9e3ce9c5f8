//! Holdout-likelihood selection: split, fit on X¹, score on X², take the argmax.
//!
//! All comparisons are made on log-likelihood sums, which preserves the
//! argmax of the density products. Ties go to the smallest procedure id.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Density, Sample, LOG_PDF_FLOOR};
use crate::estimators::{fit, FittedDensity, ProcedureSpec};
use crate::rng::{mix, rng_from_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// X¹ = indices 0..n1, X² = n1..n.
    Sequential,
    /// Uniformly random permutation from the given seed.
    Random { seed: u64 },
}

/// A partition of 0..n into an estimation part (first n1 entries of
/// `assignment`) and an evaluation part (the rest).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub assignment: Vec<usize>,
    pub mode: SplitMode,
}

pub fn make_split(n: usize, n1: usize, mode: SplitMode) -> Result<SplitPlan> {
    if n1 < 1 || n1 >= n {
        return Err(Error::BadSplitSizes { n, n1 });
    }
    let mut assignment: Vec<usize> = (0..n).collect();
    if let SplitMode::Random { seed } = mode {
        assignment.shuffle(&mut rng_from_seed(seed));
    }
    Ok(SplitPlan {
        n,
        n1,
        n2: n - n1,
        assignment,
        mode,
    })
}

impl SplitPlan {
    pub fn estimation_indices(&self) -> &[usize] {
        &self.assignment[..self.n1]
    }

    pub fn evaluation_indices(&self) -> &[usize] {
        &self.assignment[self.n1..]
    }

    /// (X¹, X²) for a sample of length `n`.
    pub fn apply(&self, sample: &Sample) -> Result<(Sample, Sample)> {
        if sample.len() != self.n {
            return Err(Error::MismatchedInputs(format!(
                "split plan is for n = {}, sample has {}",
                self.n,
                sample.len()
            )));
        }
        Ok((
            sample.select(self.estimation_indices(), "estimation part"),
            sample.select(self.evaluation_indices(), "evaluation part"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoldoutScore {
    /// Σ log p̂(X_k) with floored log-densities.
    pub score: f64,
    /// Points where the floor replaced the log-density.
    pub floor_hits: usize,
}

pub fn holdout_log_likelihood(fit: &dyn Density, holdout: &Sample) -> Result<HoldoutScore> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let mut score = 0.0;
    let mut floor_hits = 0;
    for &x in &holdout.values {
        let raw = fit.ln_pdf_raw(x);
        if raw.is_nan() || raw < LOG_PDF_FLOOR {
            floor_hits += 1;
            score += LOG_PDF_FLOOR;
        } else {
            score += raw;
        }
    }
    Ok(HoldoutScore { score, floor_hits })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreEntry {
    pub procedure_id: u32,
    pub score: f64,
    pub floor_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub scores: Vec<ScoreEntry>,
    pub winner: u32,
    /// More than one procedure attained the maximal score.
    pub tie_flag: bool,
}

impl SelectionResult {
    pub fn score_of(&self, id: u32) -> Option<f64> {
        self.scores.iter().find(|s| s.procedure_id == id).map(|s| s.score)
    }
}

/// Argmax over precomputed scores. A score of `-inf` marks a failed fit.
pub fn select_from_scores(scores: Vec<ScoreEntry>) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::NoProcedures);
    }
    let key = |s: &ScoreEntry| if s.score.is_nan() { f64::NEG_INFINITY } else { s.score };
    let best = scores.iter().map(key).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<u32> = scores.iter().filter(|s| key(s) == best).map(|s| s.procedure_id).collect();
    let winner = *tied.iter().min().expect("at least one score attains the max");
    let count = tied.len();
    Ok(SelectionResult {
        scores,
        winner,
        tie_flag: count > 1,
    })
}

pub fn select(fits: &[FittedDensity], holdout: &Sample) -> Result<SelectionResult> {
    if fits.is_empty() {
        return Err(Error::NoProcedures);
    }
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let scores = fits
        .iter()
        .map(|f| {
            let h = holdout_log_likelihood(f, holdout)?;
            Ok(ScoreEntry {
                procedure_id: f.procedure_id,
                score: h.score,
                floor_hits: h.floor_hits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    select_from_scores(scores)
}

/// Fits every procedure on X¹ of `plan` and selects on X².
pub fn split_and_select(sample: &Sample, specs: &[ProcedureSpec], plan: &SplitPlan) -> Result<SelectionResult> {
    let (train, holdout) = plan.apply(sample)?;
    let fits = specs.iter().map(|s| fit(s, &train)).collect::<Result<Vec<_>>>()?;
    select(&fits, &holdout)
}

/// How per-split results are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Most split wins; ties to the smallest id.
    #[default]
    MajorityVote,
    /// Largest product of holdout likelihoods over all splits.
    ProductOfLikelihoods,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiSplitResult {
    pub winner: u32,
    /// (procedure id, votes), ascending by id.
    pub tally: Vec<(u32, usize)>,
    pub splits: Vec<SelectionResult>,
    pub aggregation: Aggregation,
}

/// Seed of split `s` in a multi-split run.
pub fn split_seed(seed: u64, s: usize) -> u64 {
    mix(seed, &[s as u64])
}

/// Runs `splits` random splits and combines their winners.
pub fn multi_split_select(
    sample: &Sample,
    specs: &[ProcedureSpec],
    n1: usize,
    splits: usize,
    seed: u64,
    aggregation: Aggregation,
) -> Result<MultiSplitResult> {
    if splits == 0 {
        return Err(Error::InvalidParameter("need at least one split".into()));
    }
    if specs.is_empty() {
        return Err(Error::NoProcedures);
    }
    let results = (0..splits)
        .into_par_iter()
        .map(|s| {
            let plan = make_split(sample.len(), n1, SplitMode::Random { seed: split_seed(seed, s) })?;
            split_and_select(sample, specs, &plan)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ids: Vec<u32> = specs.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let tally: Vec<(u32, usize)> = ids
        .iter()
        .map(|&id| (id, results.iter().filter(|r| r.winner == id).count()))
        .collect();
    let winner = match aggregation {
        Aggregation::MajorityVote => majority(&tally),
        Aggregation::ProductOfLikelihoods => {
            let totals = ids
                .iter()
                .map(|&id| ScoreEntry {
                    procedure_id: id,
                    score: results.iter().filter_map(|r| r.score_of(id)).sum(),
                    floor_hits: 0,
                })
                .collect();
            select_from_scores(totals)?.winner
        }
    };
    Ok(MultiSplitResult {
        winner,
        tally,
        splits: results,
        aggregation,
    })
}

/// Id with the most votes; smallest id among equals. `tally` must be sorted by id.
pub fn majority(tally: &[(u32, usize)]) -> u32 {
    let mut best = tally[0];
    for &entry in &tally[1..] {
        if entry.1 > best.1 {
            best = entry;
        }
    }
    best.0
}

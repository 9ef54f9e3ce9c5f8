//! Finite-sample versions of the consistency conditions and of every bound
//! used to control the probability of choosing a worse procedure, plus
//! empirical convergence-rate estimation.
//!
//! Index 1 is the designated best procedure. With v²ᵢ = d_H²(p₀, p̂ᵢ),
//! s = V(p₀, p̂₁), M the constant in d_K ≤ M·d_H², 0 < c < 1 and t > 0:
//!
//! * Lemma-1 tail bound: P(p̂ᵢ(X²)/p₀(X²) ≥ e^(−n₂b)) ≤ exp(n₂b/2 − n₂v²ᵢ/2)
//! * deviation event W: P((d_K^(n₂) − d_K)/V ≥ t) ≤ 1/(n₂t)
//! * misselection: P(some i > 1 beats 1) ≤ P(W) + m·exp(−n₂(1−c)·minᵢ v²ᵢ/2)
//!   whenever d = M·v²₁ + s·t < c·v²ᵢ for all i > 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::hellinger;
use crate::estimators::{fit, ProcedureSpec};
use crate::quadrature::{QuadratureGrid, DEFAULT_POINTS};
use crate::rng::mix;
use crate::truth::{sample_truth_seeded, TrueDensity};
use crate::{Density, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremInputs {
    pub n1: usize,
    pub n2: usize,
    /// Number of procedures m_n.
    pub m: usize,
    /// v²ᵢ per procedure; entry 0 is the designated best.
    pub v_sq: Vec<f64>,
    /// V(p₀, p̂₁).
    pub s: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    pub c: f64,
    pub t: f64,
}

impl TheoremInputs {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInputs(m));
        if self.m == 0 || self.v_sq.len() != self.m {
            return bad(format!("v_sq has {} entries but m = {}", self.v_sq.len(), self.m));
        }
        if self.n2 == 0 {
            return bad("n2 must be at least 1".into());
        }
        if self.v_sq.iter().any(|v| !(*v >= 0.0)) {
            return bad("v_sq entries must be nonnegative".into());
        }
        if !(self.s >= 0.0) || !(self.m_const >= 0.0) {
            return bad("s and M must be nonnegative".into());
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad(format!("c must lie in (0, 1), got {}", self.c));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("t must be positive, got {}", self.t));
        }
        Ok(())
    }

    /// min over competitors i > 1 of v²ᵢ; `None` with no competitors.
    pub fn min_competitor_v_sq(&self) -> Option<f64> {
        self.v_sq[1..].iter().copied().reduce(f64::min)
    }

    /// d = M·v²₁ + s·t.
    pub fn d_value(&self) -> f64 {
        self.m_const * self.v_sq[0] + self.s * self.t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition1 {
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition2 {
    /// n₂ · minᵢ v²ᵢ
    pub stat: f64,
    /// log m / stat
    pub log_ratio: f64,
    /// The union term m·exp(−(1−c)·stat/2) is below one.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition3 {
    pub d_value: f64,
    /// (M·v²₁ + s·t) / (c·v²ᵢ) for each competitor i > 1.
    pub ratios: Vec<f64>,
    pub pass: bool,
    /// 1 − max ratio; positive when the condition holds.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub cond1: Condition1,
    pub cond2: Option<Condition2>,
    pub cond3: Condition3,
}

pub fn check_conditions(inp: &TheoremInputs) -> Result<ConditionReport> {
    inp.validate()?;
    let cond2 = inp.min_competitor_v_sq().map(|min_v| {
        let stat = inp.n2 as f64 * min_v;
        let log_m = (inp.m as f64).ln();
        Condition2 {
            stat,
            log_ratio: log_m / stat,
            holds: stat > 0.0 && (inp.m as f64) * (-(1.0 - inp.c) * stat / 2.0).exp() < 1.0,
        }
    });
    let d = inp.d_value();
    let ratios: Vec<f64> = inp.v_sq[1..].iter().map(|&v| d / (inp.c * v)).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let pass = ratios.iter().all(|&r| r < 1.0);
    Ok(ConditionReport {
        cond1: Condition1 { n1: inp.n1, n2: inp.n2 },
        cond2,
        cond3: Condition3 {
            d_value: d,
            ratios,
            pass,
            margin: 1.0 - max_ratio,
        },
    })
}

/// exp(n₂b/2 − n₂v²/2), clamped to [0, 1].
pub fn lemma1_tail_bound(n2: usize, v_sq: f64, b: f64) -> f64 {
    let n2 = n2 as f64;
    (n2 * b / 2.0 - n2 * v_sq / 2.0).exp().clamp(0.0, 1.0)
}

/// min(1, 1/(n₂t)).
pub fn chebyshev_w_bound(n2: usize, t: f64) -> f64 {
    (1.0 / (n2 as f64 * t)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisselectionBound {
    pub bound: f64,
    /// Condition (3) holds, so the bound applies.
    pub valid: bool,
}

/// P(W) bound + m·exp(−n₂(1−c)·min_{i>1} v²ᵢ / 2), clamped to [0, 1].
pub fn misselection_bound(inp: &TheoremInputs) -> Result<MisselectionBound> {
    let conditions = check_conditions(inp)?;
    let union = inp
        .min_competitor_v_sq()
        .map(|min_v| inp.m as f64 * (-(inp.n2 as f64) * (1.0 - inp.c) * min_v / 2.0).exp())
        .unwrap_or(0.0);
    Ok(MisselectionBound {
        bound: (chebyshev_w_bound(inp.n2, inp.t) + union).clamp(0.0, 1.0),
        valid: conditions.cond3.pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Lemma-1 bound with b = c·v²ᵢ for each competitor i > 1.
    pub lemma1_bounds: Vec<f64>,
    pub chebyshev_bound: f64,
    pub misselection_bound: f64,
    pub misselection_valid: bool,
    pub d_value: f64,
    pub conditions: ConditionReport,
}

pub fn bound_report(inp: &TheoremInputs) -> Result<BoundReport> {
    let conditions = check_conditions(inp)?;
    let mis = misselection_bound(inp)?;
    Ok(BoundReport {
        lemma1_bounds: inp.v_sq[1..]
            .iter()
            .map(|&v| lemma1_tail_bound(inp.n2, v, inp.c * v))
            .collect(),
        chebyshev_bound: chebyshev_w_bound(inp.n2, inp.t),
        misselection_bound: mis.bound,
        misselection_valid: mis.valid,
        d_value: inp.d_value(),
        conditions,
    })
}

/// Least-squares fit of log(value) = intercept + slope·log(n).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Classical OLS standard error of the slope (0 for an exact fit).
    pub slope_stderr: f64,
}

pub fn fit_power_law(ns: &[f64], values: &[f64]) -> Result<PowerLawFit> {
    if ns.len() != values.len() || ns.len() < 3 {
        return Err(Error::MismatchedInputs(format!(
            "power-law fit needs >= 3 matched points, got {} sizes and {} values",
            ns.len(),
            values.len()
        )));
    }
    if ns.iter().chain(values).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInputs("power-law fit needs positive finite inputs".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(PowerLawFit {
        slope,
        intercept,
        slope_stderr: (ssr / (k - 2.0) / sxx).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_d_h: f64,
    /// Monte Carlo standard error of the mean.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub procedure_id: u32,
    pub slope: f64,
    pub slope_stderr: f64,
    pub points: Vec<RatePoint>,
}

/// d_H(p₀, p̂^(n)) for each n in the grid and replicate r, fitting on the
/// full sample drawn with seed mix(seed, [n, r]). Indexed `[n][r]`.
pub fn hellinger_samples(
    truth: &TrueDensity,
    spec: &ProcedureSpec,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let cells: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..replicates).map(move |r| (n, r)))
        .collect();
    let flat = cells
        .par_iter()
        .map(|&(n, r)| {
            let sample = sample_truth_seeded(truth, n, mix(seed, &[n as u64, r as u64]));
            let fitted = fit(spec, &sample)?;
            let grid = QuadratureGrid::covering(&[truth as &dyn Density, &fitted], DEFAULT_POINTS)?;
            hellinger(truth, &fitted, &grid)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(flat.chunks(replicates.max(1)).map(<[f64]>::to_vec).collect())
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    (mean, (var / k).sqrt())
}

/// Slope of log(mean d_H) against log n from already computed replicates.
pub fn rate_from_samples(procedure_id: u32, n_grid: &[usize], samples: &[Vec<f64>]) -> Result<RateEstimate> {
    if n_grid.len() != samples.len() {
        return Err(Error::MismatchedInputs("one replicate list per sample size".into()));
    }
    let points: Vec<RatePoint> = n_grid
        .iter()
        .zip(samples)
        .map(|(&n, vals)| {
            let (mean_d_h, std_error) = mean_and_se(vals);
            RatePoint { n, mean_d_h, std_error }
        })
        .collect();
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let means: Vec<f64> = points.iter().map(|p| p.mean_d_h).collect();
    let fit = fit_power_law(&ns, &means)?;
    Ok(RateEstimate {
        procedure_id,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        points,
    })
}

pub fn estimate_rate(
    truth: &TrueDensity,
    spec: &ProcedureSpec,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInputs(
            "rate estimation needs >= 3 strictly increasing sample sizes".into(),
        ));
    }
    if replicates < 30 {
        return Err(Error::InvalidInputs(format!(
            "rate estimation needs >= 30 replicates, got {replicates}"
        )));
    }
    let samples = hellinger_samples(truth, spec, n_grid, replicates, seed)?;
    rate_from_samples(spec.id, n_grid, &samples)
}

/// Per-n Hellinger losses of two procedures on matched replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedLosses {
    pub n: usize,
    pub d_h_1: Vec<f64>,
    pub d_h_2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub n: usize,
    /// Fraction of replicates with d_H,1 < d_H,2.
    pub fraction_better: f64,
    pub median_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Better,
    NotEstablished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub points: Vec<ComparisonPoint>,
    pub verdict: Verdict,
}

pub const BETTER_FRACTION: f64 = 0.95;

/// Procedure 1 is reported better when it wins at least 95% of replicates at
/// the largest n and the median ratio d_H,1/d_H,2 strictly decreases in n.
pub fn asymptotically_better_test(losses: &[PairedLosses]) -> Result<ComparisonReport> {
    if losses.is_empty() {
        return Err(Error::MismatchedInputs("no sample sizes".into()));
    }
    if losses.windows(2).any(|w| w[0].n >= w[1].n) {
        return Err(Error::MismatchedInputs("sample sizes must strictly increase".into()));
    }
    let mut points = Vec::with_capacity(losses.len());
    for cell in losses {
        if cell.d_h_1.len() != cell.d_h_2.len() || cell.d_h_1.is_empty() {
            return Err(Error::MismatchedInputs(format!(
                "n = {}: {} vs {} replicates",
                cell.n,
                cell.d_h_1.len(),
                cell.d_h_2.len()
            )));
        }
        let k = cell.d_h_1.len();
        let wins = cell.d_h_1.iter().zip(&cell.d_h_2).filter(|(a, b)| a < b).count();
        let mut ratios: Vec<f64> = cell
            .d_h_1
            .iter()
            .zip(&cell.d_h_2)
            .map(|(&a, &b)| if a == b { 1.0 } else { a / b })
            .collect();
        ratios.sort_by(f64::total_cmp);
        let median = if k % 2 == 1 {
            ratios[k / 2]
        } else {
            0.5 * (ratios[k / 2 - 1] + ratios[k / 2])
        };
        points.push(ComparisonPoint {
            n: cell.n,
            fraction_better: wins as f64 / k as f64,
            median_ratio: median,
        });
    }
    let decreasing = points.windows(2).all(|w| w[1].median_ratio < w[0].median_ratio);
    let verdict = if points.last().unwrap().fraction_better >= BETTER_FRACTION && decreasing {
        Verdict::Better
    } else {
        Verdict::NotEstablished
    };
    Ok(ComparisonReport { points, verdict })
}

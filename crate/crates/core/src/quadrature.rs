//! Composite Simpson quadrature on a refined grid.
//!
//! A [`QuadratureGrid`] fixes the interval and the base resolution
//! `(hi - lo) / (n_points - 1)`. Before integrating, the interval is cut at
//! every jump of the integrands and at the edges of their fine-structure
//! regions; each piece gets an even number of Simpson panels at the finest
//! spacing required there. Piecewise-constant densities therefore integrate
//! exactly, and narrow bumps are never stepped over.

use serde::{Deserialize, Serialize};

use crate::density::{Density, Resolution};
use crate::{Error, Result};

pub const DEFAULT_POINTS: usize = 4097;

/// Hard cap on nodes per piece.
const MAX_PANELS_PER_PIECE: usize = 1 << 20;

/// Relative inward offset for evaluating at piece endpoints, so one-sided
/// limits are taken at jumps.
const ENDPOINT_NUDGE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadrature interval must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "quadrature needs an odd point count >= 3, got {n_points}"
            )));
        }
        Ok(QuadratureGrid { lo, hi, n_points })
    }

    /// Smallest grid with `n_points` covering every density's support.
    pub fn covering(densities: &[&dyn Density], n_points: usize) -> Result<Self> {
        let support = densities
            .iter()
            .map(|d| d.support())
            .reduce(|a, b| a.union(b))
            .ok_or_else(|| Error::InvalidParameter("no densities to cover".into()))?;
        QuadratureGrid::new(support.lo, support.hi, n_points)
    }

    pub fn base_spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    /// Same interval, twice the base resolution.
    pub fn doubled(&self) -> Self {
        QuadratureGrid {
            n_points: 2 * self.n_points - 1,
            ..*self
        }
    }

    /// Nodes and Simpson weights adapted to the given integrands.
    pub fn nodes(&self, densities: &[&dyn Density]) -> Nodes {
        let mut cuts = vec![self.lo, self.hi];
        let mut regions: Vec<Resolution> = Vec::new();
        for d in densities {
            cuts.extend(d.breakpoints());
            for r in d.resolution() {
                cuts.push(r.lo);
                cuts.push(r.hi);
                regions.push(r);
            }
        }
        cuts.retain(|&c| c >= self.lo && c <= self.hi && c.is_finite());
        cuts.sort_by(f64::total_cmp);
        let min_gap = 1e-12 * (self.hi - self.lo);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= min_gap);
        if *cuts.last().unwrap() < self.hi {
            cuts.push(self.hi);
        }

        let base = self.base_spacing();
        let mut nodes = Nodes::default();
        for piece in cuts.windows(2) {
            let (a, b) = (piece[0], piece[1]);
            let mid = 0.5 * (a + b);
            let spacing = regions
                .iter()
                .filter(|r| r.lo <= mid && mid <= r.hi && r.max_spacing > 0.0)
                .map(|r| r.max_spacing)
                .fold(base, f64::min);
            let mut panels = ((b - a) / spacing).ceil() as usize;
            panels = panels.clamp(2, MAX_PANELS_PER_PIECE);
            if panels % 2 == 1 {
                panels += 1;
            }
            let h = (b - a) / panels as f64;
            let nudge = ENDPOINT_NUDGE * (b - a);
            for k in 0..=panels {
                let x = if k == 0 {
                    a + nudge
                } else if k == panels {
                    b - nudge
                } else {
                    a + k as f64 * h
                };
                let coef = if k == 0 || k == panels {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                nodes.x.push(x);
                nodes.w.push(coef * h / 3.0);
            }
        }
        nodes
    }
}

/// Flattened quadrature rule: the integral of f is Σ w_k f(x_k).
#[derive(Debug, Clone, Default)]
pub struct Nodes {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Nodes {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for (&x, &w) in self.x.iter().zip(&self.w) {
            let y = f(x);
            if !y.is_finite() {
                return Err(Error::NonFiniteIntegrand { x });
            }
            total += w * y;
        }
        Ok(total)
    }
}

/// ∫ pdf over the grid.
pub fn normalization_check(d: &dyn Density, grid: &QuadratureGrid) -> Result<f64> {
    grid.nodes(&[d]).integrate(|x| d.pdf(x))
}

use serde::Serialize;

use crate::density::{Density, Support};

/// Equal-width histogram on [lo, hi] blended with a uniform floor:
/// (1 − δ)·histogram + δ·uniform[lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    heights: Vec<f64>,
}

impl Histogram {
    /// Returns the histogram and the number of training points clipped into
    /// the end bins.
    pub fn fit(data: &[f64], bins: usize, lo: f64, hi: f64, contamination: f64) -> (Self, usize) {
        assert!(bins >= 1 && lo < hi && !data.is_empty());
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut clipped = 0;
        for &x in data {
            if x < lo || x > hi {
                clipped += 1;
            }
            counts[bin_index(x, lo, width, bins)] += 1;
        }
        let n = data.len() as f64;
        let floor = contamination / (hi - lo);
        let heights = counts
            .iter()
            .map(|&c| (1.0 - contamination) * c as f64 / (n * width) + floor)
            .collect();
        (Histogram { lo, hi, heights }, clipped)
    }

    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.heights.len() as f64
    }
}

fn bin_index(x: f64, lo: f64, width: f64, bins: usize) -> usize {
    if x <= lo {
        return 0;
    }
    (((x - lo) / width).floor() as usize).min(bins - 1)
}

impl Density for Histogram {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        self.pdf(x).ln()
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        self.heights[bin_index(x, self.lo, self.width(), self.heights.len())]
    }

    fn support(&self) -> Support {
        Support::new(self.lo, self.hi)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.heights.len()).map(|k| self.lo + k as f64 * w).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_two_bins() {
        let (h, clipped) = Histogram::fit(&[0.1, 0.2, 0.9], 2, 0.0, 1.0, 0.0);
        assert_eq!(clipped, 0);
        assert_eq!(h.pdf(0.0), 4.0 / 3.0);
        assert_eq!(h.pdf(0.49), 4.0 / 3.0);
        assert_eq!(h.pdf(0.5), 2.0 / 3.0);
        assert_eq!(h.pdf(1.0), 2.0 / 3.0);
        assert_eq!(h.pdf(1.01), 0.0);
    }

    #[test]
    fn single_bin_is_uniform() {
        let (h, _) = Histogram::fit(&[0.25], 1, 0.0, 1.0, 0.0);
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(h.pdf(x), 1.0);
        }
    }

    #[test]
    fn out_of_range_points_are_clipped() {
        let (h, clipped) = Histogram::fit(&[-3.0, 0.5, 7.0], 4, 0.0, 1.0, 0.0);
        assert_eq!(clipped, 2);
        let w = 0.25;
        assert_eq!(h.heights()[0], 1.0 / (3.0 * w));
        assert_eq!(h.heights()[3], 1.0 / (3.0 * w));
    }

    #[test]
    fn contamination_keeps_empty_bins_positive() {
        let (h, _) = Histogram::fit(&[0.1], 10, 0.0, 1.0, 1e-6);
        assert_eq!(h.pdf(0.95), 1e-6);
        assert!(h.log_pdf(0.95).is_finite());
    }
}

//! Density abstractions and the closed-form parametric families.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Lower bound applied to every log-density used in a likelihood or a log ratio.
pub const LOG_PDF_FLOOR: f64 = -700.0;

/// Lower bound applied to raw density values inside log ratios.
pub const PDF_FLOOR: f64 = 1e-300;

/// Standard normal quantile at 1 - 1e-9; Gaussian supports are truncated here.
pub const TAIL_Z: f64 = 5.997_807_015_007_686;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Where a density puts (numerically) all of its mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn new(lo: f64, hi: f64) -> Self {
        Support { lo, hi }
    }

    pub fn union(self, other: Support) -> Support {
        Support::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A region that needs quadrature nodes no further apart than `max_spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub lo: f64,
    pub hi: f64,
    pub max_spacing: f64,
}

/// A univariate probability density.
///
/// Implementors supply the unfloored log-density; `pdf` and `log_pdf` are
/// derived from it so that `exp(log_pdf(x)) == pdf(x)` wherever the density
/// is above the floor.
pub trait Density: Send + Sync {
    /// Natural log of the density; `-inf` off the support.
    fn ln_pdf_raw(&self, x: f64) -> f64;

    /// Effective support used to place quadrature grids.
    fn support(&self) -> Support;

    fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf_raw(x).exp()
    }

    /// Log-density floored at [`LOG_PDF_FLOOR`]. Never NaN.
    fn log_pdf(&self, x: f64) -> f64 {
        let lp = self.ln_pdf_raw(x);
        if lp.is_nan() || lp < LOG_PDF_FLOOR {
            LOG_PDF_FLOOR
        } else {
            lp
        }
    }

    /// Points where the density jumps. Quadrature never straddles them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Regions of fine structure the quadrature must resolve.
    fn resolution(&self) -> Vec<Resolution> {
        Vec::new()
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        (**self).ln_pdf_raw(x)
    }
    fn support(&self) -> Support {
        (**self).support()
    }
    fn pdf(&self, x: f64) -> f64 {
        (**self).pdf(x)
    }
    fn log_pdf(&self, x: f64) -> f64 {
        (**self).log_pdf(x)
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
    fn resolution(&self) -> Vec<Resolution> {
        (**self).resolution()
    }
}

/// N(mean, sd²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sd: f64) -> Self {
        assert!(sd > 0.0 && sd.is_finite(), "Gaussian sd must be positive: {sd}");
        assert!(mean.is_finite(), "Gaussian mean must be finite: {mean}");
        Gaussian { mean, sd }
    }

    pub fn standard() -> Self {
        Gaussian::new(0.0, 1.0)
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }

    pub fn cdf(&self, x: f64) -> f64 {
        standard_normal_cdf((x - self.mean) / self.sd)
    }
}

impl Density for Gaussian {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - LN_SQRT_2PI
    }

    fn support(&self) -> Support {
        Support::new(self.mean - TAIL_Z * self.sd, self.mean + TAIL_Z * self.sd)
    }

    fn resolution(&self) -> Vec<Resolution> {
        vec![Resolution {
            lo: self.mean - 8.0 * self.sd,
            hi: self.mean + 8.0 * self.sd,
            max_spacing: self.sd / 4.0,
        }]
    }
}

/// Uniform on the closed interval [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo < hi, "Uniform needs lo < hi: [{lo}, {hi}]");
        Uniform { lo, hi }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

impl Density for Uniform {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            -(self.hi - self.lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn support(&self) -> Support {
        Support::new(self.lo, self.hi)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.lo, self.hi]
    }
}

/// Finite mixture of Gaussians with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Self {
        assert_eq!(weights.len(), components.len());
        assert!(!weights.is_empty());
        GaussianMixture {
            weights,
            components,
        }
    }

    pub fn two(weight: f64, first: Gaussian, second: Gaussian) -> Self {
        GaussianMixture::new(vec![weight, 1.0 - weight], vec![first, second])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.cdf(x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.mean)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * (c.variance() + (c.mean - mean).powi(2)))
            .sum()
    }
}

impl Density for GaussianMixture {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        log_sum_exp(
            self.weights
                .iter()
                .zip(&self.components)
                .map(|(w, c)| w.ln() + c.ln_pdf_raw(x)),
        )
    }

    fn support(&self) -> Support {
        self.components
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, _)| c.support())
            .reduce(Support::union)
            .expect("mixture has at least one weighted component")
    }

    fn resolution(&self) -> Vec<Resolution> {
        self.components
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .flat_map(|(c, _)| c.resolution())
            .collect()
    }
}

/// Numerically stable `ln(sum(exp(terms)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Provenance of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeedProvenance {
    /// Drawn from a named truth with the given seed.
    Generated { truth: String, seed: u64 },
    /// Read from a file.
    Loaded { path: String },
    /// Subset or literal values supplied by the caller.
    Derived { from: String },
}

/// An ordered list of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub provenance: SeedProvenance,
}

impl Sample {
    /// Wraps literal values. Panics on non-finite entries.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|v| v.is_finite()),
            "sample values must be finite"
        );
        Sample {
            values,
            provenance: SeedProvenance::Derived {
                from: "literal".into(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Subsample by index list, preserving the given order.
    pub fn select(&self, indices: &[usize], label: &str) -> Sample {
        Sample {
            values: indices.iter().map(|&i| self.values[i]).collect(),
            provenance: SeedProvenance::Derived {
                from: label.to_string(),
            },
        }
    }
}

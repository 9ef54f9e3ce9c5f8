//! Ground-truth catalog: densities with exact samplers, CDFs and closed forms.
//!
//! Normal draws use the basic Box–Muller transform, consuming two uniforms
//! per draw and discarding the sine branch so that every draw advances the
//! stream by the same amount. Uniform draws are `lo + (hi - lo) * u`.
//! Mixture draws spend one uniform on the component label first.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::density::{Density, Gaussian, GaussianMixture, Resolution, Sample, SeedProvenance, Support, Uniform};
use crate::rng::{rng_from_seed, Rng};

/// Serializable description of a truth; also used for fixed "procedures".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    StandardNormal,
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// weight·N(mean1, sd1²) + (1 − weight)·N(mean2, sd2²)
    Mixture {
        weight: f64,
        mean1: f64,
        sd1: f64,
        mean2: f64,
        sd2: f64,
    },
}

impl TruthSpec {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |msg: String| Err(crate::Error::InvalidParameter(msg));
        match *self {
            TruthSpec::StandardNormal => Ok(()),
            TruthSpec::Normal { mean, sd } => {
                if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                    return bad(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})"));
                }
                Ok(())
            }
            TruthSpec::Uniform { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return bad(format!("uniform needs finite lo < hi, got [{lo}, {hi}]"));
                }
                Ok(())
            }
            TruthSpec::Mixture {
                weight,
                mean1,
                sd1,
                mean2,
                sd2,
            } => {
                if !(weight > 0.0 && weight < 1.0) {
                    return bad(format!("mixture weight must lie in (0, 1), got {weight}"));
                }
                if !(sd1 > 0.0 && sd2 > 0.0 && sd1.is_finite() && sd2.is_finite()) {
                    return bad("mixture sds must be positive".into());
                }
                if !(mean1.is_finite() && mean2.is_finite()) {
                    return bad("mixture means must be finite".into());
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            TruthSpec::StandardNormal => "standard_normal".into(),
            TruthSpec::Normal { mean, sd } => format!("normal({mean},{sd})"),
            TruthSpec::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            TruthSpec::Mixture {
                weight,
                mean1,
                sd1,
                mean2,
                sd2,
            } => format!("mixture({weight};{mean1},{sd1};{mean2},{sd2})"),
        }
    }

    pub fn build(&self) -> crate::Result<TrueDensity> {
        self.validate()?;
        let shape = match *self {
            TruthSpec::StandardNormal => Shape::Normal(Gaussian::standard()),
            TruthSpec::Normal { mean, sd } => Shape::Normal(Gaussian::new(mean, sd)),
            TruthSpec::Uniform { lo, hi } => Shape::Uniform(Uniform::new(lo, hi)),
            TruthSpec::Mixture {
                weight,
                mean1,
                sd1,
                mean2,
                sd2,
            } => Shape::Mixture(GaussianMixture::two(
                weight,
                Gaussian::new(mean1, sd1),
                Gaussian::new(mean2, sd2),
            )),
        };
        Ok(TrueDensity::from_shape(self.label(), shape))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Normal(Gaussian),
    Uniform(Uniform),
    Mixture(GaussianMixture),
}

impl Shape {
    fn as_density(&self) -> &dyn Density {
        match self {
            Shape::Normal(g) => g,
            Shape::Uniform(u) => u,
            Shape::Mixture(m) => m,
        }
    }
}

/// Closed-form divergences from this truth to a reference density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForms {
    pub hellinger: f64,
    pub kl: f64,
    pub v: f64,
}

/// A truth with exact sampler and CDF. Its support is truncated at the
/// 1e-9 and 1 − 1e-9 quantiles.
#[derive(Debug, Clone)]
pub struct TrueDensity {
    pub label: String,
    pub shape: Shape,
    support: Support,
}

impl TrueDensity {
    fn from_shape(label: String, shape: Shape) -> Self {
        let mut td = TrueDensity {
            label,
            shape,
            support: Support::new(0.0, 0.0),
        };
        td.support = match &td.shape {
            Shape::Uniform(u) => Support::new(u.lo, u.hi),
            _ => Support::new(td.quantile(1e-9), td.upper_quantile(1e-9)),
        };
        td
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        TrueDensity::from_shape(
            TruthSpec::Normal { mean, sd }.label(),
            Shape::Normal(Gaussian::new(mean, sd)),
        )
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Normal(g) => g.cdf(x),
            Shape::Uniform(u) => u.cdf(x),
            Shape::Mixture(m) => m.cdf(x),
        }
    }

    /// Inverse CDF by bisection; accurate to ~1e-13 in x.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "quantile level must be in (0, 1)");
        if p > 0.5 {
            return self.upper_quantile(1.0 - p);
        }
        self.bisect(|x| self.cdf(x) >= p, p)
    }

    /// x with P(X > x) = tail, keeping full relative precision for tiny tails.
    pub fn upper_quantile(&self, tail: f64) -> f64 {
        assert!(tail > 0.0 && tail < 1.0, "tail level must be in (0, 1)");
        self.bisect(|x| self.sf(x) <= tail, 1.0 - tail)
    }

    /// Smallest x (to bisection precision) with `above(x)` true; `above` is monotone.
    fn bisect(&self, above: impl Fn(f64) -> bool, p: f64) -> f64 {
        let (mut lo, mut hi) = match &self.shape {
            Shape::Uniform(u) => return u.lo + p * (u.hi - u.lo),
            Shape::Normal(g) => (g.mean - 40.0 * g.sd, g.mean + 40.0 * g.sd),
            Shape::Mixture(m) => {
                let lo = m.components.iter().map(|c| c.mean - 40.0 * c.sd).fold(f64::INFINITY, f64::min);
                let hi = m.components.iter().map(|c| c.mean + 40.0 * c.sd).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if above(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Survival function 1 − F(x), computed without cancellation for Gaussians.
    pub fn sf(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Normal(g) => g.sf(x),
            Shape::Uniform(u) => 1.0 - u.cdf(x),
            Shape::Mixture(m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.sf(x))
                .sum(),
        }
    }

    /// One exact draw.
    pub fn draw(&self, rng: &mut Rng) -> f64 {
        match &self.shape {
            Shape::Normal(g) => g.mean + g.sd * box_muller(rng),
            Shape::Uniform(u) => u.lo + (u.hi - u.lo) * rng.random::<f64>(),
            Shape::Mixture(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = m.components.len() - 1;
                for (k, w) in m.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                let c = m.components[pick];
                c.mean + c.sd * box_muller(rng)
            }
        }
    }

    /// Closed forms against a Gaussian reference, when the truth is Gaussian.
    pub fn closed_forms_vs_gaussian(&self, reference: &Gaussian) -> Option<ClosedForms> {
        match &self.shape {
            Shape::Normal(g) => Some(gaussian_closed_forms(g, reference)),
            _ => None,
        }
    }

    /// Closed forms against a uniform reference, when the truth is uniform.
    pub fn closed_forms_vs_uniform(&self, reference: &Uniform) -> Option<ClosedForms> {
        match &self.shape {
            Shape::Uniform(u) => Some(uniform_closed_forms(u, reference)),
            _ => None,
        }
    }
}

impl Density for TrueDensity {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        self.shape.as_density().ln_pdf_raw(x)
    }
    fn support(&self) -> Support {
        self.support
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.shape.as_density().breakpoints()
    }
    fn resolution(&self) -> Vec<Resolution> {
        self.shape.as_density().resolution()
    }
}

impl Gaussian {
    pub fn sf(&self, x: f64) -> f64 {
        crate::density::standard_normal_cdf(-(x - self.mean) / self.sd)
    }
}

fn box_muller(rng: &mut Rng) -> f64 {
    // 1 - u lies in (0, 1], keeping the log finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// n i.i.d. draws; advances `rng`.
pub fn sample_truth(truth: &TrueDensity, n: usize, rng: &mut Rng) -> Sample {
    let values = (0..n).map(|_| truth.draw(rng)).collect();
    Sample {
        values,
        provenance: SeedProvenance::Derived {
            from: format!("draws from {}", truth.label),
        },
    }
}

/// n i.i.d. draws from a fresh stream seeded with `seed`.
pub fn sample_truth_seeded(truth: &TrueDensity, n: usize, seed: u64) -> Sample {
    let mut rng = rng_from_seed(seed);
    let mut s = sample_truth(truth, n, &mut rng);
    s.provenance = SeedProvenance::Generated {
        truth: truth.label.clone(),
        seed,
    };
    s
}

/// Hellinger distance (∫(√p − √q)², no ½ factor), KL and V between Gaussians.
///
/// With Z standard normal the log ratio log(p/q)(X) is A + B·Z + C·Z², so
/// V = (A + C)² + B² + 2C².
pub fn gaussian_closed_forms(p: &Gaussian, q: &Gaussian) -> ClosedForms {
    let (s1, s2) = (p.sd, q.sd);
    let delta = p.mean - q.mean;
    let sum_var = s1 * s1 + s2 * s2;
    let bc = (2.0 * s1 * s2 / sum_var).sqrt() * (-delta * delta / (4.0 * sum_var)).exp();
    let hellinger = (2.0 * (1.0 - bc)).max(0.0).sqrt();
    let a = (s2 / s1).ln() + delta * delta / (2.0 * s2 * s2);
    let b = s1 * delta / (s2 * s2);
    let c = (s1 * s1 / (s2 * s2) - 1.0) / 2.0;
    let kl = a + c;
    let v = (a + c).powi(2) + b * b + 2.0 * c * c;
    ClosedForms { hellinger, kl, v }
}

/// Closed forms between uniforms; KL and V are infinite unless supp p ⊆ supp q.
pub fn uniform_closed_forms(p: &Uniform, q: &Uniform) -> ClosedForms {
    let (lp, lq) = (p.hi - p.lo, q.hi - q.lo);
    let overlap = (p.hi.min(q.hi) - p.lo.max(q.lo)).max(0.0);
    let bc = overlap / (lp * lq).sqrt();
    let hellinger = (2.0 * (1.0 - bc)).max(0.0).sqrt();
    let (kl, v) = if p.lo >= q.lo && p.hi <= q.hi {
        let r = (lq / lp).ln();
        (r, r * r)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    ClosedForms { hellinger, kl, v }
}

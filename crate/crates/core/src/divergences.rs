//! Loss functionals between a truth p₀ and a candidate p.
//!
//! * Hellinger: d_H = (∫(√p₀ − √p)²)^½, in [0, √2]
//! * Kullback–Leibler: d_K = ∫ p₀ log(p₀/p)
//! * V = ∫ p₀ (log(p₀/p))²
//!
//! Inside log ratios log p is floored at [`LOG_PDF_FLOOR`]. When the floor
//! is active on more than [`SENTINEL_MASS`] of p₀'s mass, d_K and V are
//! reported as `+inf` rather than as a floor-dependent number.

use serde::Serialize;

use crate::density::{Density, Sample, LOG_PDF_FLOOR};
use crate::quadrature::QuadratureGrid;
use crate::{Error, Result};

pub const SENTINEL_MASS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    #[serde(rename = "d_H")]
    pub d_h: f64,
    #[serde(rename = "d_K")]
    pub d_k: f64,
    #[serde(rename = "V")]
    pub v: f64,
    /// d_K / d_H², when d_H > 0.
    #[serde(rename = "M_ratio")]
    pub m_ratio: Option<f64>,
    pub grid_used: QuadratureGrid,
    /// Fraction of nodes with p₀ > 0 where the log floor activated.
    pub clamp_fraction: f64,
    /// p₀-mass carried by those nodes.
    pub clamped_mass: f64,
}

/// All three functionals from a single pass over the quadrature nodes.
pub fn divergence_report(p0: &dyn Density, p: &dyn Density, grid: &QuadratureGrid) -> Result<DivergenceReport> {
    let nodes = grid.nodes(&[p0, p]);
    let mut hell = 0.0;
    let mut kl = 0.0;
    let mut v = 0.0;
    let mut clamped = 0usize;
    let mut clamped_mass = 0.0;
    for (&x, &w) in nodes.x.iter().zip(&nodes.w) {
        let f0 = p0.pdf(x);
        let f = p.pdf(x);
        if !f0.is_finite() || !f.is_finite() || f0 < 0.0 || f < 0.0 {
            return Err(Error::NonFiniteIntegrand { x });
        }
        let diff = f0.sqrt() - f.sqrt();
        hell += w * diff * diff;
        if f0 == 0.0 {
            continue;
        }
        let l0 = p0.ln_pdf_raw(x);
        let mut l = p.ln_pdf_raw(x);
        if l.is_nan() || l < LOG_PDF_FLOOR {
            l = LOG_PDF_FLOOR;
            clamped += 1;
            clamped_mass += w * f0;
        }
        let r = l0 - l;
        if !r.is_finite() {
            return Err(Error::NonFiniteIntegrand { x });
        }
        kl += w * f0 * r;
        v += w * f0 * r * r;
    }
    let d_h = hell.max(0.0).sqrt().min(std::f64::consts::SQRT_2);
    let (d_k, v) = if clamped_mass > SENTINEL_MASS {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (kl.max(0.0), v.max(0.0))
    };
    let m_ratio = (d_h > 0.0).then(|| d_k / (d_h * d_h));
    Ok(DivergenceReport {
        d_h,
        d_k,
        v,
        m_ratio,
        grid_used: *grid,
        clamp_fraction: clamped as f64 / nodes.len() as f64,
        clamped_mass,
    })
}

pub fn hellinger(p0: &dyn Density, p: &dyn Density, grid: &QuadratureGrid) -> Result<f64> {
    Ok(divergence_report(p0, p, grid)?.d_h)
}

pub fn kl(p0: &dyn Density, p: &dyn Density, grid: &QuadratureGrid) -> Result<f64> {
    Ok(divergence_report(p0, p, grid)?.d_k)
}

pub fn v_functional(p0: &dyn Density, p: &dyn Density, grid: &QuadratureGrid) -> Result<f64> {
    Ok(divergence_report(p0, p, grid)?.v)
}

/// (1/n₂) Σ log(p₀(X)/p(X)) over the holdout, with floored log-densities.
pub fn empirical_kl(p0: &dyn Density, p: &dyn Density, holdout: &Sample) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let total: f64 = holdout.values.iter().map(|&x| p0.log_pdf(x) - p.log_pdf(x)).sum();
    Ok(total / holdout.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Gaussian, Uniform};
    use crate::quadrature::DEFAULT_POINTS;
    use approx::assert_abs_diff_eq;

    fn grid_for(a: &dyn Density, b: &dyn Density) -> QuadratureGrid {
        QuadratureGrid::covering(&[a, b], DEFAULT_POINTS).unwrap()
    }

    #[test]
    fn identical_arguments_vanish() {
        let g = Gaussian::new(0.3, 1.7);
        let r = divergence_report(&g, &g, &grid_for(&g, &g)).unwrap();
        assert_eq!(r.d_h, 0.0);
        assert_eq!(r.d_k, 0.0);
        assert_eq!(r.v, 0.0);
        assert_eq!(r.m_ratio, None);
    }

    #[test]
    fn mean_shift_gaussians() {
        let (p0, p) = (Gaussian::new(0.0, 1.0), Gaussian::new(1.0, 1.0));
        let r = divergence_report(&p0, &p, &grid_for(&p0, &p)).unwrap();
        assert_abs_diff_eq!(r.d_h, 0.484_774_375_179_638_7, epsilon = 1e-6);
        assert_abs_diff_eq!(r.d_k, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.v, 1.25, epsilon = 1e-6);

        let p2 = Gaussian::new(2.0, 1.0);
        assert_abs_diff_eq!(v_functional(&p0, &p2, &grid_for(&p0, &p2)).unwrap(), 8.0, epsilon = 1e-6);
        let wide = Gaussian::new(0.0, 2.0);
        assert_abs_diff_eq!(
            kl(&p0, &wide, &grid_for(&p0, &wide)).unwrap(),
            0.318_147_180_559_945_3,
            epsilon = 1e-6
        );
    }

    #[test]
    fn disjoint_uniforms() {
        let (a, b) = (Uniform::new(0.0, 1.0), Uniform::new(2.0, 3.0));
        let g = grid_for(&a, &b);
        let r = divergence_report(&a, &b, &g).unwrap();
        assert_abs_diff_eq!(r.d_h, std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_eq!(r.d_k, f64::INFINITY);
        assert_eq!(r.v, f64::INFINITY);
        assert!(r.clamp_fraction > 0.0);
    }

    #[test]
    fn nested_uniforms_are_finite() {
        let (a, b) = (Uniform::new(0.0, 1.0), Uniform::new(0.0, 2.0));
        let r = divergence_report(&a, &b, &grid_for(&a, &b)).unwrap();
        assert_abs_diff_eq!(r.d_k, 2f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(r.v, 2f64.ln().powi(2), epsilon = 1e-10);
        assert_eq!(r.clamp_fraction, 0.0);
    }

    #[test]
    fn empirical_kl_cases() {
        let (p0, p) = (Gaussian::new(0.0, 1.0), Gaussian::new(1.0, 1.0));
        let one = Sample::from_values(vec![0.0]);
        assert_abs_diff_eq!(empirical_kl(&p0, &p, &one).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(empirical_kl(&p0, &p0, &Sample::from_values(vec![0.3, -2.0])).unwrap(), 0.0);
        assert!(matches!(
            empirical_kl(&p0, &p, &Sample::from_values(vec![])),
            Err(Error::EmptyHoldout)
        ));
    }
}

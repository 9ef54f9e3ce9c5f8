use proptest::prelude::*;

use cvdensity::cv_select::holdout_log_likelihood;
use cvdensity::divergences::{divergence_report, hellinger};
use cvdensity::estimators::{fit_histogram, fit_kde, fit_kde_rate};
use cvdensity::quadrature::{normalization_check, QuadratureGrid, DEFAULT_POINTS};
use cvdensity::{Density, Gaussian, GaussianMixture, Sample};

fn gaussian() -> impl Strategy<Value = Gaussian> {
    (-3.0..3.0f64, 0.3..3.0f64).prop_map(|(m, s)| Gaussian::new(m, s))
}

fn mixture() -> impl Strategy<Value = GaussianMixture> {
    (0.1..0.9f64, gaussian(), gaussian()).prop_map(|(w, a, b)| GaussianMixture::two(w, a, b))
}

fn grid(a: &dyn Density, b: &dyn Density) -> QuadratureGrid {
    QuadratureGrid::covering(&[a, b], DEFAULT_POINTS).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hellinger_is_symmetric(p in gaussian(), q in mixture()) {
        let g = grid(&p, &q);
        let a = hellinger(&p, &q, &g).unwrap();
        let b = hellinger(&q, &p, &g).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn divergence_ordering(p in mixture(), q in gaussian()) {
        let r = divergence_report(&p, &q, &grid(&p, &q)).unwrap();
        prop_assert!(r.d_h >= 0.0 && r.d_h <= 2f64.sqrt() + 1e-9);
        prop_assert!(r.d_h * r.d_h <= r.d_k + 1e-9, "{:?}", r);
        prop_assert!(r.d_k * r.d_k <= r.v + 1e-9, "{:?}", r);
    }

    #[test]
    fn holdout_score_ignores_order(values in prop::collection::vec(-5.0..5.0f64, 2..60), seed in any::<u64>()) {
        let fit = fit_kde(&Sample::from_values(vec![0.0, 0.5, -1.0, 2.0]), 0.5).unwrap();
        let mut shuffled = values.clone();
        // deterministic Fisher–Yates from the seed
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = cvdensity::rng::splitmix64(state);
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = holdout_log_likelihood(&fit, &Sample::from_values(values)).unwrap();
        let b = holdout_log_likelihood(&fit, &Sample::from_values(shuffled)).unwrap();
        prop_assert_eq!(a.floor_hits, b.floor_hits);
        prop_assert!((a.score - b.score).abs() <= 1e-10 * a.score.abs().max(1.0));
    }

    #[test]
    fn kde_fits_integrate_to_one(values in prop::collection::vec(-10.0..10.0f64, 2..80), h in 0.05..2.0f64) {
        let sample = Sample::from_values(values);
        for fit in [fit_kde(&sample, h).unwrap(), fit_kde_rate(&sample, 1.06).unwrap()] {
            let g = QuadratureGrid::covering(&[&fit], DEFAULT_POINTS).unwrap();
            let mass = normalization_check(&fit, &g).unwrap();
            prop_assert!((mass - 1.0).abs() < 1e-3, "mass {}", mass);
        }
    }

    #[test]
    fn histogram_fits_integrate_to_one(values in prop::collection::vec(-6.0..6.0f64, 1..80), bins in 1usize..40) {
        let fit = fit_histogram(&Sample::from_values(values), bins, -4.0, 4.0, 1e-6).unwrap();
        let g = QuadratureGrid::covering(&[&fit], DEFAULT_POINTS).unwrap();
        let mass = normalization_check(&fit, &g).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-9, "mass {}", mass);
    }

    #[test]
    fn log_pdf_is_never_nan(x in -1e6..1e6f64, p in mixture()) {
        prop_assert!(!p.log_pdf(x).is_nan());
        prop_assert!(p.pdf(x) >= 0.0);
    }
}

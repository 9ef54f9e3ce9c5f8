//! The competing density estimation procedures.

mod em;
mod histogram;
mod kde;

pub use em::{EmFit, EmSettings};
pub use histogram::Histogram;
pub use kde::Kde;

use serde::{Deserialize, Serialize};

use crate::density::{Density, Gaussian, GaussianMixture, Resolution, Sample, Support, Uniform};
use crate::truth::{Shape, TruthSpec};
use crate::{Error, Result};

/// Floor for every fitted Gaussian standard deviation.
pub const SIGMA_MIN: f64 = 1e-6;

pub const DEFAULT_RATE_CONSTANT: f64 = 1.06;
pub const DEFAULT_CONTAMINATION: f64 = 1e-6;

/// One estimation procedure and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum Procedure {
    KdeFixedBandwidth {
        bandwidth: f64,
    },
    /// h = c·σ̂·n^(−1/5)
    KdeRateBandwidth {
        #[serde(default = "default_rate_constant")]
        c: f64,
    },
    Histogram {
        bins: usize,
        lo: f64,
        hi: f64,
        #[serde(default = "default_contamination")]
        contamination: f64,
    },
    GaussianMle {},
    GaussianMixtureEm {
        components: usize,
        #[serde(default = "em::default_tol")]
        tol: f64,
        #[serde(default = "em::default_max_iters")]
        max_iters: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "em::default_jitter")]
        jitter: f64,
    },
    /// A density that ignores the training data.
    Fixed {
        density: TruthSpec,
    },
}

fn default_rate_constant() -> f64 {
    DEFAULT_RATE_CONSTANT
}
fn default_contamination() -> f64 {
    DEFAULT_CONTAMINATION
}

impl Procedure {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Procedure::KdeFixedBandwidth { bandwidth } => {
                if !(*bandwidth > 0.0 && bandwidth.is_finite()) {
                    return bad(format!("bandwidth must be positive, got {bandwidth}"));
                }
            }
            Procedure::KdeRateBandwidth { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("bandwidth constant must be positive, got {c}"));
                }
            }
            Procedure::Histogram {
                bins,
                lo,
                hi,
                contamination,
            } => {
                if *bins == 0 {
                    return bad("histogram needs at least one bin".into());
                }
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return bad(format!("histogram range must satisfy lo < hi, got [{lo}, {hi}]"));
                }
                if !(0.0..=1.0).contains(contamination) {
                    return bad(format!("contamination must lie in [0, 1], got {contamination}"));
                }
            }
            Procedure::GaussianMle {} => {}
            Procedure::GaussianMixtureEm {
                components,
                tol,
                max_iters,
                jitter,
                ..
            } => {
                if *components == 0 {
                    return bad("mixture needs at least one component".into());
                }
                if !(*tol >= 0.0) || *max_iters == 0 || !(*jitter >= 0.0) {
                    return bad("EM needs tol >= 0, jitter >= 0 and max_iters >= 1".into());
                }
            }
            Procedure::Fixed { density } => density.validate()?,
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Procedure::KdeFixedBandwidth { .. } => "kde_fixed_bandwidth",
            Procedure::KdeRateBandwidth { .. } => "kde_rate_bandwidth",
            Procedure::Histogram { .. } => "histogram",
            Procedure::GaussianMle {} => "gaussian_mle",
            Procedure::GaussianMixtureEm { .. } => "gaussian_mixture_em",
            Procedure::Fixed { .. } => "fixed",
        }
    }
}

/// A procedure with its stable 1-based id.
///
/// Serialized as `{"id": 1, "kind": "...", "params": {...}}`; `params` may be
/// omitted when every parameter has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProcedureSpec", into = "RawProcedureSpec")]
pub struct ProcedureSpec {
    pub id: u32,
    pub procedure: Procedure,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcedureSpec {
    id: u32,
    kind: String,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

impl TryFrom<RawProcedureSpec> for ProcedureSpec {
    type Error = String;

    fn try_from(raw: RawProcedureSpec) -> std::result::Result<Self, String> {
        let params = raw.params.unwrap_or_else(|| serde_json::json!({}));
        let procedure: Procedure =
            serde_json::from_value(serde_json::json!({ "kind": raw.kind, "params": params }))
                .map_err(|e| format!("procedure {}: {e}", raw.id))?;
        Ok(ProcedureSpec {
            id: raw.id,
            procedure,
        })
    }
}

impl From<ProcedureSpec> for RawProcedureSpec {
    fn from(spec: ProcedureSpec) -> Self {
        let mut v = serde_json::to_value(&spec.procedure).expect("procedure serializes");
        let kind = v["kind"].as_str().unwrap_or_default().to_string();
        let params = v.get_mut("params").map(serde_json::Value::take);
        RawProcedureSpec {
            id: spec.id,
            kind,
            params,
        }
    }
}

impl ProcedureSpec {
    pub fn new(id: u32, procedure: Procedure) -> Self {
        ProcedureSpec { id, procedure }
    }

    pub fn fit(&self, train: &Sample) -> Result<FittedDensity> {
        fit(self, train)
    }
}

/// Checks ids are 1..=m in order, and every parameter record is valid.
pub fn validate_specs(specs: &[ProcedureSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::NoProcedures);
    }
    for (k, s) in specs.iter().enumerate() {
        if s.id as usize != k + 1 {
            return Err(Error::InvalidParameter(format!(
                "procedure ids must be contiguous from 1; position {} has id {}",
                k + 1,
                s.id
            )));
        }
        s.procedure.validate()?;
    }
    Ok(())
}

/// Fitting metadata; fields not relevant to a procedure stay at their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub bandwidth: Option<f64>,
    pub em_iterations: Option<usize>,
    pub final_log_likelihood: Option<f64>,
    pub converged: Option<bool>,
    pub log_likelihood_trace: Vec<f64>,
    pub degenerate_variance: bool,
    pub clipped_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Gaussian(Gaussian),
    Uniform(Uniform),
    Mixture(GaussianMixture),
    Kde(Kde),
    Histogram(Histogram),
}

impl FittedModel {
    fn inner(&self) -> &dyn Density {
        match self {
            FittedModel::Gaussian(d) => d,
            FittedModel::Uniform(d) => d,
            FittedModel::Mixture(d) => d,
            FittedModel::Kde(d) => d,
            FittedModel::Histogram(d) => d,
        }
    }
}

impl Density for FittedModel {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        self.inner().ln_pdf_raw(x)
    }
    fn pdf(&self, x: f64) -> f64 {
        self.inner().pdf(x)
    }
    fn support(&self) -> Support {
        self.inner().support()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner().breakpoints()
    }
    fn resolution(&self) -> Vec<Resolution> {
        self.inner().resolution()
    }
}

/// A density produced by a procedure from a training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedDensity {
    pub model: FittedModel,
    pub procedure_id: u32,
    pub n_train: usize,
    pub diagnostics: FitDiagnostics,
}

impl FittedDensity {
    /// Wraps an already known density, e.g. a frozen competitor.
    pub fn fixed(procedure_id: u32, model: FittedModel) -> Self {
        FittedDensity {
            model,
            procedure_id,
            n_train: 0,
            diagnostics: FitDiagnostics::default(),
        }
    }
}

impl Density for FittedDensity {
    fn ln_pdf_raw(&self, x: f64) -> f64 {
        self.model.ln_pdf_raw(x)
    }
    fn pdf(&self, x: f64) -> f64 {
        self.model.pdf(x)
    }
    fn support(&self) -> Support {
        self.model.support()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.model.breakpoints()
    }
    fn resolution(&self) -> Vec<Resolution> {
        self.model.resolution()
    }
}

fn require(train: &Sample, need: usize) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if train.len() < need {
        return Err(Error::InsufficientData {
            need,
            got: train.len(),
        });
    }
    Ok(())
}

/// (mean, 1/n variance) of the data.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Gaussian KDE with bandwidth `h`.
pub fn fit_kde(train: &Sample, h: f64) -> Result<FittedDensity> {
    require(train, 1)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    Ok(FittedDensity {
        model: FittedModel::Kde(Kde::new(train.values.clone(), h)),
        procedure_id: 0,
        n_train: train.len(),
        diagnostics: FitDiagnostics {
            bandwidth: Some(h),
            ..Default::default()
        },
    })
}

/// Gaussian KDE with h = c·σ̂·n^(−1/5), σ̂ the floored MLE standard deviation.
pub fn fit_kde_rate(train: &Sample, c: f64) -> Result<FittedDensity> {
    require(train, 2)?;
    let (_, var) = moments(&train.values);
    let sd = var.sqrt().max(SIGMA_MIN);
    let h = c * sd * (train.len() as f64).powf(-0.2);
    let mut fit = fit_kde(train, h)?;
    fit.diagnostics.degenerate_variance = var.sqrt() < SIGMA_MIN;
    Ok(fit)
}

/// Equal-width histogram on [lo, hi], blended with δ·uniform[lo, hi].
pub fn fit_histogram(train: &Sample, bins: usize, lo: f64, hi: f64, contamination: f64) -> Result<FittedDensity> {
    require(train, 1)?;
    Procedure::Histogram {
        bins,
        lo,
        hi,
        contamination,
    }
    .validate()?;
    let (hist, clipped) = Histogram::fit(&train.values, bins, lo, hi, contamination);
    Ok(FittedDensity {
        model: FittedModel::Histogram(hist),
        procedure_id: 0,
        n_train: train.len(),
        diagnostics: FitDiagnostics {
            clipped_points: clipped,
            ..Default::default()
        },
    })
}

/// N(μ̂, σ̂²) with the 1/n variance; σ̂ below [`SIGMA_MIN`] is replaced and flagged.
pub fn fit_gaussian_mle(train: &Sample) -> Result<FittedDensity> {
    require(train, 2)?;
    let (mean, var) = moments(&train.values);
    let sd = var.sqrt();
    let degenerate = sd < SIGMA_MIN;
    Ok(FittedDensity {
        model: FittedModel::Gaussian(Gaussian::new(mean, sd.max(SIGMA_MIN))),
        procedure_id: 0,
        n_train: train.len(),
        diagnostics: FitDiagnostics {
            degenerate_variance: degenerate,
            ..Default::default()
        },
    })
}

/// K-component Gaussian mixture by EM. Non-convergence is reported in the
/// diagnostics; the last iterate is returned.
pub fn fit_mixture_em(train: &Sample, components: usize, settings: &EmSettings) -> Result<FittedDensity> {
    if components == 0 {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    require(train, 2 * components)?;
    let fit = em::fit_em(&train.values, components, settings);
    Ok(FittedDensity {
        model: FittedModel::Mixture(fit.mixture),
        procedure_id: 0,
        n_train: train.len(),
        diagnostics: FitDiagnostics {
            em_iterations: Some(fit.iterations),
            final_log_likelihood: fit.trace.last().copied(),
            converged: Some(fit.converged),
            log_likelihood_trace: fit.trace,
            ..Default::default()
        },
    })
}

/// Fits `spec` on `train`, tagging the result with the spec's id.
pub fn fit(spec: &ProcedureSpec, train: &Sample) -> Result<FittedDensity> {
    spec.procedure.validate()?;
    let mut fitted = match &spec.procedure {
        Procedure::KdeFixedBandwidth { bandwidth } => fit_kde(train, *bandwidth)?,
        Procedure::KdeRateBandwidth { c } => fit_kde_rate(train, *c)?,
        Procedure::Histogram {
            bins,
            lo,
            hi,
            contamination,
        } => fit_histogram(train, *bins, *lo, *hi, *contamination)?,
        Procedure::GaussianMle {} => fit_gaussian_mle(train)?,
        Procedure::GaussianMixtureEm {
            components,
            tol,
            max_iters,
            seed,
            jitter,
        } => {
            let settings = EmSettings {
                tol: *tol,
                max_iters: *max_iters,
                seed: *seed,
                jitter: *jitter,
            };
            fit_mixture_em(train, *components, &settings)?
        }
        Procedure::Fixed { density } => {
            let truth = density.build()?;
            let model = match truth.shape {
                Shape::Normal(g) => FittedModel::Gaussian(g),
                Shape::Uniform(u) => FittedModel::Uniform(u),
                Shape::Mixture(m) => FittedModel::Mixture(m),
            };
            FittedDensity {
                model,
                procedure_id: 0,
                n_train: train.len(),
                diagnostics: FitDiagnostics::default(),
            }
        }
    };
    fitted.procedure_id = spec.id;
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{normalization_check, QuadratureGrid};
    use approx::assert_relative_eq;

    fn sample(v: &[f64]) -> Sample {
        Sample::from_values(v.to_vec())
    }

    #[test]
    fn gaussian_mle_hand_cases() {
        let f = fit_gaussian_mle(&sample(&[-1.0, 1.0])).unwrap();
        let FittedModel::Gaussian(g) = f.model else { panic!() };
        assert_eq!((g.mean, g.variance()), (0.0, 1.0));

        let f = fit_gaussian_mle(&sample(&[1.0, 2.0, 3.0])).unwrap();
        let FittedModel::Gaussian(g) = f.model else { panic!() };
        assert_eq!(g.mean, 2.0);
        assert_relative_eq!(g.variance(), 2.0 / 3.0, max_relative = 1e-15);
        assert!(!f.diagnostics.degenerate_variance);

        let f = fit_gaussian_mle(&sample(&[5.0, 5.0, 5.0])).unwrap();
        let FittedModel::Gaussian(g) = f.model else { panic!() };
        assert!(f.diagnostics.degenerate_variance);
        assert_eq!(g.sd, SIGMA_MIN);
    }

    #[test]
    fn error_paths() {
        let empty = sample(&[]);
        assert!(matches!(fit_kde(&empty, 1.0), Err(Error::EmptyTrainingSet)));
        assert!(matches!(fit_gaussian_mle(&empty), Err(Error::EmptyTrainingSet)));
        assert!(matches!(fit_histogram(&empty, 3, 0.0, 1.0, 0.0), Err(Error::EmptyTrainingSet)));
        assert!(matches!(fit_mixture_em(&empty, 1, &EmSettings::default()), Err(Error::EmptyTrainingSet)));
        assert!(matches!(
            fit_gaussian_mle(&sample(&[1.0])),
            Err(Error::InsufficientData { need: 2, got: 1 })
        ));
        assert!(matches!(
            fit_mixture_em(&sample(&[1.0, 2.0, 3.0]), 2, &EmSettings::default()),
            Err(Error::InsufficientData { need: 4, got: 3 })
        ));
        assert!(fit_kde(&sample(&[1.0]), 0.0).is_err());
        assert!(fit_histogram(&sample(&[1.0]), 0, 0.0, 1.0, 0.0).is_err());
        assert!(fit_histogram(&sample(&[1.0]), 2, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_component_em_equals_mle() {
        let data: Vec<f64> = (0..97).map(|i| ((i * 37) % 101) as f64 * 0.13 - 4.0).collect();
        let s = sample(&data);
        let mle = fit_gaussian_mle(&s).unwrap();
        let em = fit_mixture_em(&s, 1, &EmSettings::default()).unwrap();
        let FittedModel::Gaussian(g) = mle.model else { panic!() };
        let FittedModel::Mixture(m) = em.model else { panic!() };
        assert_eq!(m.weights, vec![1.0]);
        assert_relative_eq!(m.components[0].mean, g.mean, max_relative = 1e-14);
        assert_relative_eq!(m.components[0].sd, g.sd, max_relative = 1e-14);
    }

    #[test]
    fn histogram_with_contamination_normalizes() {
        let f = fit_histogram(&sample(&[0.1, 0.2, 0.9, 0.95]), 7, 0.0, 1.0, 1e-6).unwrap();
        let grid = QuadratureGrid::new(0.0, 1.0, 4097).unwrap();
        assert_relative_eq!(normalization_check(&f, &grid).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn refits_are_bitwise_identical() {
        let data: Vec<f64> = (0..60).map(|i| (i as f64 * 1.7).sin() * 4.0).collect();
        let s = sample(&data);
        let spec = ProcedureSpec::new(
            1,
            Procedure::GaussianMixtureEm {
                components: 3,
                tol: 1e-8,
                max_iters: 500,
                seed: 99,
                jitter: 0.01,
            },
        );
        let a = fit(&spec, &s).unwrap();
        let b = fit(&spec, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.procedure_id, 1);
    }

    #[test]
    fn spec_json_round_trip_and_strictness() {
        let text = r#"[
            {"id": 1, "kind": "kde_rate_bandwidth"},
            {"id": 2, "kind": "gaussian_mle"},
            {"id": 3, "kind": "histogram", "params": {"bins": 10, "lo": -5, "hi": 5}},
            {"id": 4, "kind": "gaussian_mixture_em", "params": {"components": 2, "seed": 3}},
            {"id": 5, "kind": "fixed", "params": {"density": {"kind": "normal", "mean": 0, "sd": 1}}},
            {"id": 6, "kind": "kde_fixed_bandwidth", "params": {"bandwidth": 0.4}}
        ]"#;
        let specs: Vec<ProcedureSpec> = serde_json::from_str(text).unwrap();
        validate_specs(&specs).unwrap();
        assert_eq!(specs[0].procedure, Procedure::KdeRateBandwidth { c: 1.06 });
        assert_eq!(
            specs[2].procedure,
            Procedure::Histogram { bins: 10, lo: -5.0, hi: 5.0, contamination: 1e-6 }
        );
        let back: Vec<ProcedureSpec> =
            serde_json::from_str(&serde_json::to_string(&specs).unwrap()).unwrap();
        assert_eq!(back, specs);

        for bad in [
            r#"{"id": 1, "kind": "kde_rate_bandwidth", "params": {"cc": 1}}"#,
            r#"{"id": 1, "kind": "gaussian_mle", "extra": 1}"#,
            r#"{"id": 1, "kind": "gaussian_mixture_em", "params": {"components": 2, "tolerance": 1}}"#,
            r#"{"id": 1, "kind": "wavelet"}"#,
        ] {
            assert!(serde_json::from_str::<ProcedureSpec>(bad).is_err(), "{bad}");
        }
        let err = serde_json::from_str::<ProcedureSpec>(
            r#"{"id": 1, "kind": "kde_rate_bandwidth", "params": {"cc": 1}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("cc"), "{err}");
    }

    #[test]
    fn ids_must_be_contiguous() {
        let specs = vec![
            ProcedureSpec::new(1, Procedure::GaussianMle {}),
            ProcedureSpec::new(3, Procedure::GaussianMle {}),
        ];
        assert!(validate_specs(&specs).is_err());
        assert!(matches!(validate_specs(&[]), Err(Error::NoProcedures)));
    }
}

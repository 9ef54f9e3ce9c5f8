use serde::{Deserialize, Serialize};

use crate::estimators::{validate_specs, ProcedureSpec};
use crate::quadrature::DEFAULT_POINTS;
use crate::truth::TruthSpec;
use crate::{Error, Result};

/// How many of n points go to the estimation part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitRule {
    /// n1 = round(ratio · n).
    Ratio(f64),
    FixedN1(usize),
}

impl SplitRule {
    pub fn n1_for(&self, n: usize) -> Result<usize> {
        let n1 = match *self {
            SplitRule::Ratio(r) => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::Config(format!("split ratio must lie in (0, 1), got {r}")));
                }
                (r * n as f64).round() as usize
            }
            SplitRule::FixedN1(n1) => n1,
        };
        if n1 < 1 || n1 >= n {
            return Err(Error::BadSplitSizes { n, n1 });
        }
        Ok(n1)
    }

    pub fn label(&self) -> String {
        match *self {
            SplitRule::Ratio(r) => format!("ratio={r}"),
            SplitRule::FixedN1(n1) => format!("n1={n1}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitModeSetting {
    /// The first n1 draws form X¹.
    #[default]
    Sequential,
    /// A seeded permutation per replicate.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySettings {
    #[serde(default = "default_c")]
    pub c: f64,
    /// t = n₂^(−t_exponent).
    #[serde(default = "default_t_exponent")]
    pub t_exponent: f64,
    /// Cap on the measured d_K / d_H² ratio used as M.
    #[serde(default = "default_m_max")]
    pub m_max: f64,
}

fn default_c() -> f64 {
    0.5
}
fn default_t_exponent() -> f64 {
    1.0 / 3.0
}
fn default_m_max() -> f64 {
    100.0
}

impl Default for TheorySettings {
    fn default() -> Self {
        TheorySettings {
            c: default_c(),
            t_exponent: default_t_exponent(),
            m_max: default_m_max(),
        }
    }
}

impl TheorySettings {
    pub fn t_for(&self, n2: usize) -> f64 {
        (n2 as f64).powf(-self.t_exponent)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Config(format!("theory.c must lie in (0, 1), got {}", self.c)));
        }
        if !(self.t_exponent > 0.0 && self.t_exponent < 1.0) {
            return Err(Error::Config(format!(
                "theory.t_exponent must lie in (0, 1) so that n2·t grows, got {}",
                self.t_exponent
            )));
        }
        if !(self.m_max > 0.0) {
            return Err(Error::Config("theory.m_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: None,
            formats: default_formats(),
        }
    }
}

fn default_split_rules() -> Vec<SplitRule> {
    vec![SplitRule::Ratio(0.5), SplitRule::Ratio(0.75), SplitRule::Ratio(0.9)]
}
fn default_best() -> u32 {
    1
}
fn default_points() -> usize {
    DEFAULT_POINTS
}

/// A replicated selection experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub truth: TruthSpec,
    pub procedures: Vec<ProcedureSpec>,
    /// Total sample sizes n.
    pub n_grid: Vec<usize>,
    #[serde(default = "default_split_rules")]
    pub split_rules: Vec<SplitRule>,
    #[serde(default)]
    pub split_mode: SplitModeSetting,
    pub replicates: usize,
    pub base_seed: u64,
    /// The procedure treated as index 1 in the theorem accounting.
    #[serde(default = "default_best")]
    pub best_procedure_id: u32,
    #[serde(default)]
    pub theory: TheorySettings,
    #[serde(default = "default_points")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(Error::Config(format!(
                "experiment_id must be a nonempty file-name-safe token, got {:?}",
                self.experiment_id
            )));
        }
        self.truth.validate()?;
        validate_specs(&self.procedures)?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid is empty".into()));
        }
        if self.split_rules.is_empty() {
            return Err(Error::Config("split_rules is empty".into()));
        }
        for &n in &self.n_grid {
            for rule in &self.split_rules {
                rule.n1_for(n).map_err(|e| Error::Config(format!("n = {n}, {}: {e}", rule.label())))?;
            }
        }
        if !self.procedures.iter().any(|p| p.id == self.best_procedure_id) {
            return Err(Error::Config(format!(
                "best_procedure_id {} is not a procedure id",
                self.best_procedure_id
            )));
        }
        if self.quadrature_points < 3 || self.quadrature_points.is_multiple_of(2) {
            return Err(Error::Config("quadrature_points must be odd and >= 3".into()));
        }
        self.theory.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "experiment_id": "smoke",
        "truth": {"kind": "standard_normal"},
        "procedures": [{"id": 1, "kind": "gaussian_mle"}],
        "n_grid": [50],
        "replicates": 5,
        "base_seed": 1
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.split_rules.len(), 3);
        assert_eq!(cfg.theory, TheorySettings::default());
        assert_eq!(cfg.quadrature_points, 4097);
        assert_eq!(cfg.best_procedure_id, 1);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replace("\"replicates\"", "\"replicatez\": 3, \"replicates\"");
        let err = serde_json::from_str::<ExperimentConfig>(&text).unwrap_err().to_string();
        assert!(err.contains("replicatez"), "{err}");

        let text = MINIMAL.replace("\"base_seed\": 1", "\"base_seed\": 1, \"theory\": {\"cc\": 0.5}");
        let err = serde_json::from_str::<ExperimentConfig>(&text).unwrap_err().to_string();
        assert!(err.contains("cc"), "{err}");
    }

    #[test]
    fn split_rules_parse_and_resolve() {
        let rules: Vec<SplitRule> = serde_json::from_str(r#"[{"ratio": 0.9}, {"fixed_n1": 3}]"#).unwrap();
        assert_eq!(rules[0].n1_for(100).unwrap(), 90);
        assert_eq!(rules[1].n1_for(10).unwrap(), 3);
        assert!(rules[1].n1_for(3).is_err());
        assert!(SplitRule::Ratio(0.5).n1_for(1).is_err());
        assert!(SplitRule::Ratio(1.5).n1_for(100).is_err());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.best_procedure_id = 2;
        assert!(cfg.validate().is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.n_grid = vec![1];
        assert!(cfg.validate().is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.experiment_id = "../x".into();
        assert!(cfg.validate().is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.theory.c = 1.0;
        assert!(cfg.validate().is_err());
    }
}

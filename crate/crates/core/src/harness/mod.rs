//! Replicated selection experiments and bound verification.

pub mod bounds;
pub mod config;
pub mod experiment;
pub mod replicate;

pub use bounds::{run_bound_verification, BoundCell, BoundConfig, BoundKind, BoundRow, BoundVerification, FrozenProcedure};
pub use config::{ExperimentConfig, OutputFormat, OutputSettings, SplitModeSetting, SplitRule, TheorySettings};
pub use experiment::{run_experiment, CompetitorSummary, CurveEntry, ExperimentOutput, OutputPaths, CSV_HEADER};
pub use replicate::{run_replicate, sample_seed, ProcedureOutcome, ReplicateResult};

use crate::{Error, Result};

pub(crate) const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs `f` on a dedicated pool of `parallelism` threads (0 = rayon default).
pub fn with_parallelism<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Shortest round-trip representation; stable across platforms.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

pub(crate) fn fmt_bool(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

pub(crate) fn fmt_opt_bool(b: Option<bool>) -> String {
    b.map(fmt_bool).unwrap_or_default()
}

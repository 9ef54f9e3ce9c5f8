//! Pilot runs behind the acceptance tolerances.
//!
//! `cargo run --release -p cvdensity --example pilot -- [consistency|rates]`

use std::time::Instant;

use cvdensity::harness::{run_experiment, ExperimentConfig};
use cvdensity::theory::estimate_rate;
use cvdensity::{ProcedureSpec, TruthSpec};

fn consistency() {
    let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "experiment_id": "pilot-consistency",
        "truth": {"kind": "mixture", "weight": 0.5, "mean1": -2.0, "sd1": 1.0, "mean2": 2.0, "sd2": 1.0},
        "procedures": [
            {"id": 1, "kind": "kde_rate_bandwidth"},
            {"id": 2, "kind": "gaussian_mle"}
        ],
        "n_grid": [100, 400, 1600],
        "split_rules": [{"ratio": 0.5}, {"ratio": 0.9}],
        "replicates": 200,
        "base_seed": 20240611
    }))
    .unwrap();
    let start = Instant::now();
    let out = run_experiment(&cfg, 0).unwrap();
    for e in &out.curve {
        println!(
            "n={:5} {:10} p={:.3} se={:.4} cond3={:.2} mis|cond3={:.3} (k={}) bound|cond3={:.3} W={:.3} M={:.2}",
            e.n,
            e.split.label(),
            e.selection_probability,
            e.std_error,
            e.cond3_fraction,
            e.misselection_frequency_given_cond3,
            e.cond3_replicates,
            e.mean_misselection_bound_given_cond3,
            e.w_event_frequency,
            e.mean_m_ratio
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}

fn rates() {
    let truth = TruthSpec::StandardNormal.build().unwrap();
    let n_grid = [100, 400, 1600, 6400];
    for spec in [r#"{"id": 1, "kind": "gaussian_mle"}"#, r#"{"id": 2, "kind": "kde_rate_bandwidth"}"#] {
        let spec: ProcedureSpec = serde_json::from_str(spec).unwrap();
        let start = Instant::now();
        let est = estimate_rate(&truth, &spec, &n_grid, 200, 20240611).unwrap();
        println!(
            "{}: slope {:.4} ± {:.4} ({:.1}s)",
            spec.procedure.kind_name(),
            est.slope,
            est.slope_stderr,
            start.elapsed().as_secs_f64()
        );
        for p in &est.points {
            println!("  n={:5} mean d_H={:.5} se={:.5}", p.n, p.mean_d_h, p.std_error);
        }
    }
}

fn main() {
    match std::env::args().nth(1).as_deref() {
        Some("rates") => rates(),
        Some("consistency") => consistency(),
        _ => {
            consistency();
            rates();
        }
    }
}

use std::time::Instant;

use cvdensity::harness::{
    run_bound_verification, run_experiment, run_replicate, BoundConfig, BoundKind, ExperimentConfig, SplitRule,
    CSV_HEADER,
};

fn config(json: serde_json::Value) -> ExperimentConfig {
    let cfg: ExperimentConfig = serde_json::from_value(json).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn bimodal(n_grid: &[usize], replicates: usize) -> ExperimentConfig {
    config(serde_json::json!({
        "experiment_id": "bimodal",
        "truth": {"kind": "mixture", "weight": 0.5, "mean1": -2.0, "sd1": 1.0, "mean2": 2.0, "sd2": 1.0},
        "procedures": [
            {"id": 1, "kind": "kde_rate_bandwidth"},
            {"id": 2, "kind": "gaussian_mle"}
        ],
        "n_grid": n_grid,
        "split_rules": [{"ratio": 0.5}],
        "replicates": replicates,
        "base_seed": 20240611
    }))
}

#[test]
fn single_procedure_always_wins() {
    let cfg = config(serde_json::json!({
        "experiment_id": "single",
        "truth": {"kind": "standard_normal"},
        "procedures": [{"id": 1, "kind": "gaussian_mle"}],
        "n_grid": [40],
        "split_rules": [{"ratio": 0.5}],
        "replicates": 10,
        "base_seed": 3
    }));
    let out = run_experiment(&cfg, 1).unwrap();
    assert!(out.rows.iter().all(|r| r.winner == 1));
    assert_eq!(out.curve[0].selection_probability, 1.0);
    assert_eq!(out.curve[0].std_error, 0.0);
}

#[test]
fn duplicate_kde_specs_tie_to_lower_id() {
    let cfg = config(serde_json::json!({
        "experiment_id": "dup",
        "truth": {"kind": "standard_normal"},
        "procedures": [
            {"id": 1, "kind": "kde_fixed_bandwidth", "params": {"bandwidth": 0.4}},
            {"id": 2, "kind": "kde_fixed_bandwidth", "params": {"bandwidth": 0.4}}
        ],
        "n_grid": [60],
        "split_rules": [{"ratio": 0.5}],
        "replicates": 8,
        "base_seed": 11
    }));
    let out = run_experiment(&cfg, 1).unwrap();
    for row in &out.rows {
        assert_eq!(row.procedures[0].score, row.procedures[1].score);
        assert!(row.tie);
        assert_eq!(row.winner, 1);
    }
    assert_eq!(out.curve[0].tie_fraction, 1.0);
}

#[test]
fn replicate_rows_are_reproducible() {
    let cfg = bimodal(&[1600], 1);
    let truth = cfg.truth.build().unwrap();
    let a = run_replicate(&cfg, &truth, 1600, SplitRule::Ratio(0.5), 0).unwrap();
    let b = run_replicate(&cfg, &truth, 1600, SplitRule::Ratio(0.5), 0).unwrap();
    assert_eq!(a, b);
    let c = run_replicate(&cfg, &truth, 1600, SplitRule::Ratio(0.5), 1).unwrap();
    assert_ne!(a.procedures[0].score, c.procedures[0].score);
}

#[test]
fn smoke_run_is_quick_and_well_formed() {
    let cfg = config(serde_json::json!({
        "experiment_id": "smoke",
        "truth": {"kind": "standard_normal"},
        "procedures": [
            {"id": 1, "kind": "gaussian_mle"},
            {"id": 2, "kind": "kde_rate_bandwidth"},
            {"id": 3, "kind": "histogram", "params": {"bins": 10, "lo": -4.0, "hi": 4.0}}
        ],
        "n_grid": [50],
        "split_rules": [{"ratio": 0.5}],
        "replicates": 5,
        "base_seed": 7
    }));
    let start = Instant::now();
    let out = run_experiment(&cfg, 1).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(out.rows.len(), 5);
    assert_eq!(out.curve.len(), 1);

    for row in &out.rows {
        let best = row
            .procedures
            .iter()
            .map(|p| p.score)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(row.outcome(row.winner).unwrap().score, best);
        for p in &row.procedures {
            let d = p.divergence.unwrap();
            assert!(d.d_h * d.d_h <= d.d_k + 1e-9);
        }
    }

    let mut buf = Vec::new();
    out.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 15);

    let dir = tempfile::tempdir().unwrap();
    let paths = out.write_to(dir.path()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(paths.summary.unwrap()).unwrap()).unwrap();
    assert_eq!(summary["base_seed"], 7);
    assert_eq!(summary["curve"].as_array().unwrap().len(), 1);
    assert!(paths.timing.exists());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let cfg = bimodal(&[100, 200], 6);
    let a = run_experiment(&cfg, 1).unwrap();
    let b = run_experiment(&cfg, 4).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
}

#[test]
fn split_rules_share_samples() {
    let mut cfg = bimodal(&[100], 3);
    cfg.split_rules = vec![SplitRule::Ratio(0.5), SplitRule::Ratio(0.9)];
    let out = run_experiment(&cfg, 1).unwrap();
    assert_eq!(out.curve.len(), 2);
    assert_eq!(out.curve[0].n1, 50);
    assert_eq!(out.curve[1].n1, 90);
    assert_eq!(out.rows.len(), 6);
}

fn bound_config(json: serde_json::Value) -> BoundConfig {
    let cfg: BoundConfig = serde_json::from_value(json).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn lemma1_frequency_respects_bound() {
    let cfg = bound_config(serde_json::json!({
        "experiment_id": "lemma1",
        "truth": {"kind": "standard_normal"},
        "competitors": [{"procedure": {"id": 2, "kind": "fixed", "params": {"density": {"kind": "normal", "mean": 2.0, "sd": 1.0}}}}],
        "cells": [{"n2": 100, "c": 0.5}],
        "replicates": 2000,
        "base_seed": 5
    }));
    let out = run_bound_verification(&cfg, 1).unwrap();
    assert_eq!(out.rows.len(), 1);
    let row = &out.rows[0];
    assert_eq!(row.event, BoundKind::Lemma1);
    // v² for a unit mean shift of 2: 2(1 − e^(−1/2)).
    let v_sq = 2.0 * (1.0 - (-0.5f64).exp());
    assert!((row.v_sq.unwrap() - v_sq).abs() < 1e-8);
    assert!((row.bound - (-100.0 * v_sq * 0.25).exp()).abs() < 1e-12);
    assert!(row.within_3se);
}

#[test]
fn truth_as_competitor_gives_vacuous_bound() {
    let cfg = bound_config(serde_json::json!({
        "experiment_id": "vacuous",
        "truth": {"kind": "standard_normal"},
        "competitors": [{"procedure": {"id": 1, "kind": "fixed", "params": {"density": {"kind": "standard_normal"}}}}],
        "cells": [{"n2": 50, "c": 0.5}],
        "replicates": 100,
        "base_seed": 5
    }));
    let out = run_bound_verification(&cfg, 1).unwrap();
    let row = &out.rows[0];
    assert_eq!(row.bound, 1.0);
    assert!(row.frequency <= 1.0);
    assert_eq!(row.frequency, 1.0);
}

#[test]
fn w_event_frequency_falls_with_n2() {
    let cfg = bound_config(serde_json::json!({
        "experiment_id": "w",
        "truth": {"kind": "standard_normal"},
        "best": {"procedure": {"id": 1, "kind": "fixed", "params": {"density": {"kind": "normal", "mean": 0.2, "sd": 1.0}}}},
        "competitors": [],
        "cells": [{"n2": 100, "c": 0.5}, {"n2": 1000, "c": 0.5}],
        "replicates": 1000,
        "base_seed": 9
    }));
    let out = run_bound_verification(&cfg, 1).unwrap();
    let w: Vec<_> = out.rows.iter().filter(|r| r.event == BoundKind::W).collect();
    assert_eq!(w.len(), 2);
    assert!(w[1].frequency < w[0].frequency, "{} vs {}", w[0].frequency, w[1].frequency);
}

#[test]
fn bound_outputs_are_reproducible() {
    let cfg = bound_config(serde_json::json!({
        "experiment_id": "repro",
        "truth": {"kind": "standard_normal"},
        "best": {"procedure": {"id": 1, "kind": "gaussian_mle"}, "n1": 200},
        "competitors": [{"procedure": {"id": 2, "kind": "fixed", "params": {"density": {"kind": "normal", "mean": 1.0, "sd": 1.0}}}}],
        "cells": [{"n2": 80, "c": 0.5}],
        "replicates": 200,
        "base_seed": 13
    }));
    let a = run_bound_verification(&cfg, 1).unwrap();
    let b = run_bound_verification(&cfg, 3).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
    assert!(a.rows.iter().any(|r| r.event == BoundKind::Misselection));
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    for name in ["smoke.json", "consistency.json"] {
        serde_json::from_str::<ExperimentConfig>(&read(name)).unwrap().validate().unwrap();
    }
    serde_json::from_str::<BoundConfig>(&read("lemma1.json")).unwrap().validate().unwrap();
}

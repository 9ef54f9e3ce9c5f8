use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cvdensity::cv_select::{make_split, multi_split_select, split_and_select, Aggregation, SplitMode};
use cvdensity::density::SeedProvenance;
use cvdensity::estimators::validate_specs;
use cvdensity::harness::{run_bound_verification, run_experiment, with_parallelism, BoundConfig, ExperimentConfig, SplitModeSetting, SplitRule};
use cvdensity::theory::{
    asymptotically_better_test, bound_report, chebyshev_w_bound, check_conditions, hellinger_samples,
    lemma1_tail_bound, misselection_bound, rate_from_samples, PairedLosses, RateEstimate, TheoremInputs,
};
use cvdensity::{Error, ProcedureSpec, Sample, TruthSpec};

use crate::{AggregationArg, Cli, Command};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn internal(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
    fn data(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::InvalidInputs(_)
            | Error::MismatchedInputs(_)
            | Error::NoProcedures
            | Error::BadSplitSizes { .. }
            | Error::Json(_) => 3,
            Error::EmptyTrainingSet | Error::InsufficientData { .. } | Error::EmptyHoldout => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Select {
            data,
            n1,
            ratio,
            splits,
            aggregation,
            random_split,
        } => select(cli, data, *n1, *ratio, *splits, *aggregation, *random_split),
        Command::Simulate => simulate(cli),
        Command::Rates { fixture } => match fixture {
            Some(path) => rates_fixture(cli, path),
            None => rates(cli),
        },
        Command::Bounds { n2, v_sq, c, b, t, m } => {
            if cli.config.is_some() {
                bounds_config(cli)
            } else {
                bounds_raw(*n2, *v_sq, *c, *b, *t, *m)
            }
        }
        Command::CheckConditions {
            n1,
            n2,
            m,
            v_sq,
            s,
            m_const,
            c,
            t,
        } => {
            let inputs = if cli.config.is_some() {
                load_config::<TheoremInputs>(cli)?
            } else {
                let need = |name: &str| Failure::config(format!("check-conditions needs --{name} (or --config)"));
                TheoremInputs {
                    n1: n1.ok_or_else(|| need("n1"))?,
                    n2: n2.ok_or_else(|| need("n2"))?,
                    m: m.unwrap_or(v_sq.len()),
                    v_sq: if v_sq.is_empty() { return Err(need("v-sq")) } else { v_sq.clone() },
                    s: s.ok_or_else(|| need("s"))?,
                    m_const: m_const.ok_or_else(|| need("M"))?,
                    c: c.ok_or_else(|| need("c"))?,
                    t: t.ok_or_else(|| need("t"))?,
                }
            };
            check(cli, &inputs)
        }
    }
}

/// Reads `--config`, applies `--set` overrides, then deserializes strictly.
fn load_config_value(cli: &Cli) -> CmdResult<Value> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("this command needs --config FILE"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("config {} is not valid JSON: {e}", path.display())))?;
    for assignment in &cli.overrides {
        crate::overrides::apply(&mut doc, assignment).map_err(Failure::config)?;
    }
    Ok(doc)
}

fn parse_config<T: for<'de> Deserialize<'de>>(cli: &Cli, doc: Value) -> CmdResult<T> {
    let shown = cli.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    serde_json::from_value(doc).map_err(|e| Failure::config(format!("config {shown}: {e}")))
}

fn load_config<T: for<'de> Deserialize<'de>>(cli: &Cli) -> CmdResult<T> {
    let doc = load_config_value(cli)?;
    parse_config(cli, doc)
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal(e.to_string()))? + "\n";
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))
        .and_then(|_| std::fs::write(path, text))
        .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

/// One real per line; blank lines and `#` comments are skipped.
pub fn read_data(path: &Path) -> CmdResult<Sample> {
    let shown = path.display();
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read data file {shown}: {e}")))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let x: f64 = body
            .parse()
            .map_err(|_| Failure::data(format!("{shown}:{}: not a number: {body:?}", i + 1)))?;
        if !x.is_finite() {
            return Err(Failure::data(format!("{shown}:{}: value must be finite", i + 1)));
        }
        values.push(x);
    }
    if values.is_empty() {
        return Err(Failure::data(format!("data file {shown} contains no values")));
    }
    Ok(Sample {
        values,
        provenance: SeedProvenance::Loaded {
            path: shown.to_string(),
        },
    })
}

/// Procedures for `select`; a bare JSON array of procedures is also accepted.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectConfig {
    procedures: Vec<ProcedureSpec>,
    #[serde(default)]
    split: Option<SplitRule>,
    #[serde(default = "one")]
    splits: usize,
    #[serde(default)]
    aggregation: Aggregation,
    #[serde(default)]
    split_mode: SplitModeSetting,
    #[serde(default)]
    seed: u64,
}

fn one() -> usize {
    1
}

#[allow(clippy::too_many_arguments)]
fn select(
    cli: &Cli,
    data: &Path,
    n1: Option<usize>,
    ratio: Option<f64>,
    splits: Option<usize>,
    aggregation: Option<AggregationArg>,
    random_split: bool,
) -> CmdResult {
    let mut doc = load_config_value(cli)?;
    if doc.is_array() {
        doc = serde_json::json!({ "procedures": doc });
    }
    let cfg: SelectConfig = parse_config(cli, doc)?;
    validate_specs(&cfg.procedures)?;
    let sample = read_data(data)?;
    if sample.len() < 2 {
        return Err(Failure::data(format!(
            "data file {} needs at least 2 values, found {}",
            data.display(),
            sample.len()
        )));
    }
    let rule = match (n1, ratio) {
        (Some(n1), _) => SplitRule::FixedN1(n1),
        (None, Some(r)) => SplitRule::Ratio(r),
        (None, None) => cfg.split.unwrap_or(SplitRule::Ratio(0.5)),
    };
    let n1 = rule.n1_for(sample.len())?;
    let splits = splits.unwrap_or(cfg.splits);
    let seed = cli.seed.unwrap_or(cfg.seed);
    let aggregation = match aggregation {
        Some(AggregationArg::MajorityVote) => Aggregation::MajorityVote,
        Some(AggregationArg::ProductOfLikelihoods) => Aggregation::ProductOfLikelihoods,
        None => cfg.aggregation,
    };
    let kind = |id: u32| {
        cfg.procedures
            .iter()
            .find(|p| p.id == id)
            .map_or("?", |p| p.procedure.kind_name())
    };

    println!("n = {}, n1 = {n1}, n2 = {}", sample.len(), sample.len() - n1);
    if splits <= 1 {
        let mode = if random_split || cfg.split_mode == SplitModeSetting::Random {
            SplitMode::Random { seed }
        } else {
            SplitMode::Sequential
        };
        let plan = make_split(sample.len(), n1, mode)?;
        let result = split_and_select(&sample, &cfg.procedures, &plan)?;
        println!("{:>4}  {:<22} {:>18} {:>10}", "id", "kind", "holdout_loglik", "floor_hits");
        for s in &result.scores {
            println!(
                "{:>4}  {:<22} {:>18.6} {:>10}",
                s.procedure_id,
                kind(s.procedure_id),
                s.score,
                s.floor_hits
            );
        }
        println!("winner: {} ({}){}", result.winner, kind(result.winner), if result.tie_flag { " [tie]" } else { "" });
        if let Some(dir) = &cli.out {
            write_json(&dir.join("selection.json"), &result)?;
        }
    } else {
        let result = multi_split_select(&sample, &cfg.procedures, n1, splits, seed, aggregation)?;
        println!("{:>4}  {:<22} {:>6}", "id", "kind", "votes");
        for &(id, votes) in &result.tally {
            println!("{:>4}  {:<22} {:>6}", id, kind(id), votes);
        }
        println!("winner: {} ({}) over {splits} splits", result.winner, kind(result.winner));
        if let Some(dir) = &cli.out {
            write_json(&dir.join("selection.json"), &result)?;
        }
    }
    Ok(())
}

fn simulate(cli: &Cli) -> CmdResult {
    let mut cfg: ExperimentConfig = load_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    let out = run_experiment(&cfg, cli.parallel)?;
    println!(
        "{:>6} {:>10} {:>5} {:>5} {:>9} {:>8} {:>7} {:>7} {:>10}",
        "n", "split", "n1", "n2", "P(best)", "se", "cond2", "cond3", "bound"
    );
    for e in &out.curve {
        println!(
            "{:>6} {:>10} {:>5} {:>5} {:>9.4} {:>8.4} {:>7.3} {:>7.3} {:>10.4}",
            e.n,
            e.split.label(),
            e.n1,
            e.n2,
            e.selection_probability,
            e.std_error,
            e.cond2_fraction,
            e.cond3_fraction,
            e.mean_misselection_bound
        );
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let paths = out.write_to(&dir)?;
    for p in [paths.csv, paths.summary, Some(paths.timing)].into_iter().flatten() {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RatesConfig {
    experiment_id: String,
    truth: TruthSpec,
    procedures: Vec<ProcedureSpec>,
    n_grid: Vec<usize>,
    replicates: usize,
    base_seed: u64,
}

fn print_rate(label: &str, est: &RateEstimate) {
    println!("{label}: slope {:.4} (stderr {:.4})", est.slope, est.slope_stderr);
    for p in &est.points {
        println!("  n = {:>7}  mean d_H = {:.6}  se = {:.6}", p.n, p.mean_d_h, p.std_error);
    }
}

fn rates(cli: &Cli) -> CmdResult {
    let mut cfg: RatesConfig = load_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    validate_specs(&cfg.procedures)?;
    if cfg.n_grid.len() < 3 || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::config("n_grid needs >= 3 strictly increasing sizes"));
    }
    if cfg.replicates < 30 {
        return Err(Failure::config("rates need replicates >= 30"));
    }
    let truth = cfg.truth.build()?;
    let samples = with_parallelism(cli.parallel, || {
        cfg.procedures
            .iter()
            .map(|spec| hellinger_samples(&truth, spec, &cfg.n_grid, cfg.replicates, cfg.base_seed))
            .collect::<cvdensity::Result<Vec<_>>>()
    })??;
    let mut estimates = Vec::new();
    for (spec, s) in cfg.procedures.iter().zip(&samples) {
        let est = rate_from_samples(spec.id, &cfg.n_grid, s)?;
        print_rate(&format!("procedure {} ({})", spec.id, spec.procedure.kind_name()), &est);
        estimates.push(est);
    }
    let mut comparisons = Vec::new();
    for (k, spec) in cfg.procedures.iter().enumerate().skip(1) {
        let losses: Vec<PairedLosses> = cfg
            .n_grid
            .iter()
            .enumerate()
            .map(|(i, &n)| PairedLosses {
                n,
                d_h_1: samples[0][i].clone(),
                d_h_2: samples[k][i].clone(),
            })
            .collect();
        let report = asymptotically_better_test(&losses)?;
        println!(
            "procedure {} vs {}: {:?}",
            cfg.procedures[0].id, spec.id, report.verdict
        );
        comparisons.push(serde_json::json!({
            "procedure_1": cfg.procedures[0].id,
            "procedure_2": spec.id,
            "report": report,
        }));
    }
    if let Some(dir) = &cli.out {
        write_json(
            &dir.join(format!("{}.rates.json", cfg.experiment_id)),
            &serde_json::json!({
                "config": cfg,
                "estimates": estimates,
                "comparisons": comparisons,
            }),
        )?;
    }
    Ok(())
}

fn rates_fixture(cli: &Cli, path: &Path) -> CmdResult {
    let shown = path.display();
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read fixture {shown}: {e}")))?;
    let mut n_grid: Vec<usize> = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let bad = || Failure::data(format!("{shown}:{}: expected `n d_H`, got {body:?}", i + 1));
        if fields.len() != 2 {
            return Err(bad());
        }
        let n: usize = fields[0].parse().map_err(|_| bad())?;
        let d: f64 = fields[1].parse().map_err(|_| bad())?;
        if !(d > 0.0 && d.is_finite()) {
            return Err(bad());
        }
        match n_grid.iter().position(|&m| m == n) {
            Some(k) => samples[k].push(d),
            None => {
                n_grid.push(n);
                samples.push(vec![d]);
            }
        }
    }
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::data(format!(
            "fixture {shown} needs >= 2 distinct sample sizes in increasing order"
        )));
    }
    let est = rate_from_samples(0, &n_grid, &samples)?;
    print_rate("fixture", &est);
    if let Some(dir) = &cli.out {
        write_json(&dir.join("rates.json"), &est)?;
    }
    Ok(())
}

fn bounds_raw(
    n2: Option<usize>,
    v_sq: Option<f64>,
    c: Option<f64>,
    b: Option<f64>,
    t: Option<f64>,
    m: Option<usize>,
) -> CmdResult {
    let n2 = n2.ok_or_else(|| Failure::config("bounds needs --n2 (or --config)"))?;
    let v_sq = v_sq.ok_or_else(|| Failure::config("bounds needs --v-sq (or --config)"))?;
    if n2 == 0 || v_sq.is_nan() || v_sq < 0.0 {
        return Err(Failure::config("need n2 >= 1 and v_sq >= 0"));
    }
    let c = c.unwrap_or(0.5);
    if !(c > 0.0 && c < 1.0) {
        return Err(Failure::config(format!("c must lie in (0, 1), got {c}")));
    }
    let b = b.unwrap_or(c * v_sq);
    println!("lemma1_tail_bound(n2={n2}, v^2={v_sq}, b={b}) = {:.6}", lemma1_tail_bound(n2, v_sq, b));
    if let Some(t) = t {
        if t.is_nan() || t <= 0.0 {
            return Err(Failure::config("t must be positive"));
        }
        println!("chebyshev_w_bound(n2={n2}, t={t}) = {:.6}", chebyshev_w_bound(n2, t));
        if let Some(m) = m {
            // The best procedure's own v² does not enter the bound.
            let mut v = vec![0.0];
            v.extend(std::iter::repeat_n(v_sq, m.saturating_sub(1)));
            let inputs = TheoremInputs {
                n1: n2,
                n2,
                m,
                v_sq: v,
                s: 0.0,
                m_const: 0.0,
                c,
                t,
            };
            let mb = misselection_bound(&inputs)?;
            println!("misselection_bound(m={m}, min v^2={v_sq}) = {:.6}", mb.bound);
        }
    }
    Ok(())
}

fn bounds_config(cli: &Cli) -> CmdResult {
    let mut cfg: BoundConfig = load_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    let out = run_bound_verification(&cfg, cli.parallel)?;
    println!(
        "{:>6} {:>5} {:<13} {:>4} {:>10} {:>10} {:>10} {:>6}",
        "n2", "c", "event", "id", "frequency", "se", "bound", "ok"
    );
    for r in &out.rows {
        println!(
            "{:>6} {:>5} {:<13} {:>4} {:>10.5} {:>10.5} {:>10.6} {:>6}",
            r.n2,
            r.c,
            format!("{:?}", r.event).to_lowercase(),
            r.procedure_id.map(|i| i.to_string()).unwrap_or_else(|| "-".into()),
            r.frequency,
            r.std_error,
            r.bound,
            if r.within_3se { "yes" } else { "NO" }
        );
    }
    if let Some(dir) = &cli.out {
        let (csv, json) = out.write_to(dir)?;
        println!("wrote {}", csv.display());
        println!("wrote {}", json.display());
    }
    Ok(())
}

fn check(cli: &Cli, inputs: &TheoremInputs) -> CmdResult {
    let cond = check_conditions(inputs)?;
    println!("condition (1): n1 = {}, n2 = {}, min = {}", cond.cond1.n1, cond.cond1.n2, cond.cond1.n1.min(cond.cond1.n2));
    match &cond.cond2 {
        Some(c2) => println!(
            "condition (2): n2*min v^2 = {:.4}, ln(m)/stat = {:.4} -> {}",
            c2.stat,
            c2.log_ratio,
            if c2.holds { "PASS" } else { "FAIL" }
        ),
        None => println!("condition (2): no competitors"),
    }
    println!("condition (3): d = {:.6}", cond.cond3.d_value);
    for (i, r) in cond.cond3.ratios.iter().enumerate() {
        println!("  ratio_{} = d/(c v^2) = {:.4}", i + 2, r);
    }
    println!("condition (3): {}", if cond.cond3.pass { "PASS" } else { "FAIL" });
    if let Some(dir) = &cli.out {
        write_json(&dir.join("conditions.json"), &bound_report(inputs)?)?;
    }
    Ok(())
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fhcure::em::basis_for;
use fhcure::evaluation::{integrated_squared_error, rmise_from_errors, Outcomes};
use fhcure::io::write_dataset_csv;
use fhcure::io::write_table_csv;
use fhcure::simulation::{
    calibrate as calibrate_scenario, estimated_crossover, generate_scenario_b_with_truth, replication_rng,
    run_replications, simulate_scenario_a, sweep_cutoffs, true_baseline_survival,
};
use fhcure::{
    coefficient_labels, conventional_risk_score, fit_conventional as fit_conventional_model, fit_with_intervals,
    kaplan_meier, mean_cumulative_dynamic_auc, ConventionalConfig, ConventionalFit, EbConfig, LambdaMode,
    ModelSnapshot, ResultDocument, ScenarioAConfig, ScenarioBConfig, StudyConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::input::{prepare, reload, DataProvenance};
use crate::{
    CalibrateArgs, ConventionalArgs, EvaluateArgs, Failure, FitArgs, Metric, PenaltyArgs, ReplicateArgs, Scenario,
    SimulateArgs, SweepArgs,
};

type CmdResult = Result<(), Failure>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn emit(doc: &ResultDocument, out: Option<&Path>) -> CmdResult {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            doc.write(&mut w)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            doc.write(&mut lock)?;
            lock.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CmdResult {
    write_table_csv(BufWriter::new(File::create(path)?), rows)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{what} {}: {e}", path.display())))
}

fn lambda_mode(p: &PenaltyArgs) -> Result<LambdaMode, Failure> {
    if p.empirical_bayes {
        return Ok(LambdaMode::EmpiricalBayes);
    }
    let l = p.lambda.unwrap_or(1.0);
    if !(l > 0.0 && l.is_finite()) {
        return Err(Failure::usage(format!("--lambda must be positive, got {l}")));
    }
    Ok(LambdaMode::Fixed(l))
}

pub fn fit(a: &FitArgs) -> CmdResult {
    if !(a.c > 0.0 && a.c.is_finite()) {
        return Err(Failure::usage(format!("--c must be positive, got {}", a.c)));
    }
    let mode = lambda_mode(&a.penalty)?;
    let prep = prepare(&a.input, &a.split, Some(a.c))?;
    let data = &prep.train;
    let basis = basis_for(data, a.c, a.k)?;
    let inferred = fit_with_intervals(data, basis, mode, &EbConfig::default(), a.level, a.force_intervals)?;
    let params = &inferred.fit.params;
    let names = data.feature_names();
    let labels = coefficient_labels(names);
    let n_alpha = params.alpha().len() - 1;
    let all_labels: Vec<String> = labels.iter().cloned().chain((1..=n_alpha).map(|i| format!("alpha:{i}"))).collect();

    let coefficients: serde_json::Map<String, Value> =
        labels.iter().zip(params.to_theta()).map(|(l, v)| (l.clone(), json!(v))).collect();
    let intervals: Vec<Value> = all_labels
        .iter()
        .zip(&inferred.intervals)
        .map(|(name, iv)| json!({"name": name, "estimate": iv.estimate, "low": iv.low, "high": iv.high, "sd": iv.sd}))
        .collect();
    let provenance = DataProvenance {
        schema: prep.schema.clone(),
        split: prep.split,
        encoder: prep.encoder.clone(),
        features: names.to_vec(),
    };
    let fit = &inferred.fit;
    let doc = ResultDocument {
        command: "fit".into(),
        config: json!({
            "input": a.input.input, "c": a.c, "K": a.k, "lambda_mode": mode, "level": a.level,
            "force_intervals": a.force_intervals, "split": prep.split,
        }),
        estimates: json!({
            "coefficients": coefficients,
            "alpha": params.alpha(),
            "lambda": inferred.lambda,
            "model": ModelSnapshot::from_params(params, names),
            "data": provenance,
        }),
        intervals: Value::Array(intervals),
        diagnostics: json!({
            "n_train": data.len(),
            "em": {
                "converged": fit.converged,
                "iterations": fit.iterations,
                "log_posterior": fit.log_posterior(),
                "inner_shortfalls": fit.inner_shortfalls,
                "late_event_rows": fit.late_event_rows.len(),
            },
            "empirical_bayes": inferred.eb.as_ref().map(|s| json!({
                "lambda_hat": s.lambda_hat,
                "converged": s.converged,
                "outer_iterations": s.outer_iterations,
                "last_change": s.last_change,
                "log_marginal": s.log_marginal,
            })),
            "precision_min_eigenvalue": inferred.precision_min_eigenvalue,
            "eigen_floor_applied": inferred.eigen_floor_applied,
            "knots": params.knots().knots(),
            "dropped_columns": prep.dropped,
            "warnings": prep.warnings,
        }),
        seed: prep.split.map(|s| s.seed),
    };
    emit(&doc, a.out.as_deref())
}

pub fn fit_conventional(a: &ConventionalArgs) -> CmdResult {
    let prep = prepare(&a.input, &a.split, None)?;
    let data = &prep.train;
    let fit = fit_conventional_model(data, &ConventionalConfig::default())?;
    let labels = coefficient_labels(data.feature_names());
    let values = fit.b_inf.iter().chain(&fit.beta_inf);
    let coefficients: serde_json::Map<String, Value> = labels.iter().zip(values).map(|(l, v)| (l.clone(), json!(v))).collect();
    let provenance = DataProvenance {
        schema: prep.schema.clone(),
        split: prep.split,
        encoder: prep.encoder.clone(),
        features: data.feature_names().to_vec(),
    };
    let doc = ResultDocument {
        command: "fit-conventional".into(),
        config: json!({"input": a.input.input, "split": prep.split}),
        estimates: json!({
            "coefficients": coefficients,
            "model": fit,
            "data": provenance,
        }),
        intervals: Value::Null,
        diagnostics: json!({
            "n_train": data.len(),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "log_likelihood": fit.log_likelihood(),
            "separation": fit.separation,
            "dropped_columns": prep.dropped,
            "warnings": prep.warnings,
        }),
        seed: prep.split.map(|s| s.seed),
    };
    emit(&doc, a.out.as_deref())
}

fn scenario_a(scenario: Scenario, config: Option<&Path>, n: Option<usize>, seed: u64) -> Result<ScenarioAConfig, Failure> {
    let mut cfg = match (config, scenario) {
        (Some(p), _) => read_json::<ScenarioAConfig>(p, "scenario config")?,
        (None, Scenario::A1) => ScenarioAConfig::a1(1000, seed),
        (None, Scenario::A2) => ScenarioAConfig::a2(1000, seed),
        (None, Scenario::B) => return Err(Failure::usage("scenario b is not a Scenario A design")),
    };
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn scenario_b(config: Option<&Path>, n: Option<usize>, seed: u64) -> Result<ScenarioBConfig, Failure> {
    let mut cfg = match config {
        Some(p) => read_json::<ScenarioBConfig>(p, "scenario config")?,
        None => ScenarioBConfig::default(),
    };
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Explicit seed, else the config file's, else fresh entropy.
fn resolve_seed(flag: Option<u64>, config: Option<&Path>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(p) = config {
        if let Some(s) = read_json::<Value>(p, "scenario config")?.get("seed").and_then(Value::as_u64) {
            return Ok(s);
        }
    }
    Ok(rand::random())
}

#[derive(Serialize)]
struct TruthRowA {
    z: u8,
    event_time: f64,
    censor_time: f64,
}

#[derive(Serialize)]
struct TruthRowB {
    event_time: f64,
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let seed = resolve_seed(a.seed, a.config.as_deref())?;
    let (data, config, summary) = match a.scenario {
        Scenario::A1 | Scenario::A2 => {
            let cfg = scenario_a(a.scenario, a.config.as_deref(), a.n, seed)?;
            let (data, truth) = simulate_scenario_a(&cfg, &cfg.covariate_matrix(), &mut replication_rng(seed, a.replication))?;
            let n = data.len() as f64;
            let z = truth.z.iter().filter(|&&z| z).count();
            let censored_z = truth.z.iter().zip(data.events()).filter(|(&z, &e)| z && !e).count();
            if let Some(p) = &a.truth {
                let rows: Vec<TruthRowA> = (0..data.len())
                    .map(|i| TruthRowA {
                        z: u8::from(truth.z[i]),
                        event_time: truth.event_times[i],
                        censor_time: truth.censor_times[i],
                    })
                    .collect();
                write_csv(p, &rows)?;
            }
            let summary = json!({
                "rows": data.len(),
                "event_group_fraction": z as f64 / n,
                "censored_fraction_in_event_group": if z > 0 { censored_z as f64 / z as f64 } else { f64::NAN },
                "truth": {"names": cfg.parameter_names(), "values": cfg.truth()},
            });
            (data, to_value(&cfg), summary)
        }
        Scenario::B => {
            let cfg = scenario_b(a.config.as_deref(), a.n, seed)?;
            let (data, latent) = generate_scenario_b_with_truth(&cfg)?;
            if let Some(p) = &a.truth {
                let rows: Vec<TruthRowB> = latent.iter().map(|&t| TruthRowB { event_time: t }).collect();
                write_csv(p, &rows)?;
            }
            let events = data.events().iter().filter(|&&e| e).count();
            let summary = json!({
                "rows": data.len(),
                "event_fraction": events as f64 / data.len() as f64,
                "true_crossover": cfg.crossover(),
            });
            (data, to_value(&cfg), summary)
        }
    };
    write_dataset_csv(BufWriter::new(File::create(&a.out)?), &data)?;
    let doc = ResultDocument {
        command: "simulate".into(),
        config: json!({"scenario": a.scenario, "replication": a.replication, "scenario_config": config, "out": a.out}),
        estimates: Value::Null,
        intervals: Value::Null,
        diagnostics: summary,
        seed: Some(seed),
    };
    emit(&doc, None)
}

pub fn replicate(a: &ReplicateArgs) -> CmdResult {
    let seed = resolve_seed(a.seed, a.config.as_deref())?;
    let cfg = scenario_a(a.scenario, a.config.as_deref(), a.n, seed)?;
    let study = StudyConfig {
        k: a.k,
        lambda: lambda_mode(&a.penalty)?,
        level: a.level,
        jobs: a.jobs,
        ..StudyConfig::default()
    };
    let outcome = run_replications(&cfg, a.m, &study)?;
    write_csv(&a.out, &outcome.summary.parameters)?;
    if let Some(p) = &a.records {
        let names = cfg.parameter_names();
        let rows: Vec<Value> = outcome
            .records
            .iter()
            .map(|r| {
                let mut row = serde_json::Map::new();
                row.insert("replication".into(), json!(r.replication));
                row.insert("lambda".into(), json!(r.lambda));
                row.insert("ise".into(), json!(r.ise));
                row.insert("converged".into(), json!(r.converged));
                for (j, name) in names.iter().enumerate() {
                    row.insert(name.clone(), json!(r.estimates.get(j).copied().unwrap_or(f64::NAN)));
                }
                row.insert("error".into(), json!(r.error.clone().unwrap_or_default()));
                Value::Object(row)
            })
            .collect();
        write_records(p, &rows)?;
    }
    let failures: Vec<Value> = outcome
        .records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| json!({"replication": r.replication, "error": e})))
        .collect();
    let doc = ResultDocument {
        command: "replicate".into(),
        config: json!({"scenario": a.scenario, "M": a.m, "scenario_config": cfg, "study": study, "out": a.out}),
        estimates: to_value(&outcome.summary.parameters),
        intervals: Value::Null,
        diagnostics: json!({
            "rmise": outcome.summary.rmise,
            "replications": outcome.summary.replications,
            "failures": outcome.summary.failures,
            "failed": failures,
        }),
        seed: Some(seed),
    };
    emit(&doc, None)
}

/// CSV from JSON objects sharing one key order.
fn write_records(path: &Path, rows: &[Value]) -> CmdResult {
    let mut w = BufWriter::new(File::create(path)?);
    let Some(Value::Object(first)) = rows.first() else {
        return Ok(());
    };
    let header: Vec<&String> = first.keys().collect();
    writeln!(w, "{}", header.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","))?;
    for r in rows {
        let cells: Vec<String> = header
            .iter()
            .map(|k| match &r[k.as_str()] {
                Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
                Value::String(s) => s.clone(),
                Value::Null => "NaN".into(),
                v => v.to_string(),
            })
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::usage(format!("cannot parse --grid '{spec}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| start + step * i as f64).collect());
    }
    spec.split(',').map(num).collect()
}

pub fn sweep(a: &SweepArgs) -> CmdResult {
    let grid = parse_grid(&a.grid)?;
    let mode = lambda_mode(&a.penalty)?;
    let no_split = crate::SplitArgs { split: None, seed: None };
    let prep = prepare(&a.input, &no_split, None)?;
    let result = sweep_cutoffs(&prep.train, &grid, a.k, mode, &EbConfig::default(), a.level)?;
    write_csv(&a.out, &result.entries)?;
    let labels = coefficient_labels(prep.train.feature_names());
    let crossovers: serde_json::Map<String, Value> = labels
        .iter()
        .map(|l| (l.clone(), json!(estimated_crossover(&result.entries, l))))
        .collect();
    let doc = ResultDocument {
        command: "sweep".into(),
        config: json!({"input": a.input.input, "grid": grid, "K": a.k, "lambda_mode": mode, "level": a.level, "out": a.out}),
        estimates: json!({"sign_changes": crossovers}),
        intervals: Value::Null,
        diagnostics: json!({"failures": result.failures, "dropped_columns": prep.dropped, "warnings": prep.warnings}),
        seed: None,
    };
    emit(&doc, None)
}

enum Loaded {
    Proposed(fhcure::FiniteHorizonParams),
    Conventional(ConventionalFit),
}

struct StoredModel {
    name: String,
    model: Loaded,
    data: DataProvenance,
}

fn load_model(path: &Path) -> Result<StoredModel, Failure> {
    let doc: ResultDocument = read_json(path, "result document")?;
    let field = |key: &str| -> Result<Value, Failure> {
        doc.estimates
            .get(key)
            .cloned()
            .ok_or_else(|| Failure::usage(format!("{} has no estimates.{key}", path.display())))
    };
    fn parse<T: DeserializeOwned>(v: Value, path: &Path) -> Result<T, Failure> {
        serde_json::from_value(v).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
    let model = match doc.command.as_str() {
        "fit" => {
            let snap: ModelSnapshot = parse(field("model")?, path)?;
            Loaded::Proposed(snap.to_params()?)
        }
        "fit-conventional" => Loaded::Conventional(parse(field("model")?, path)?),
        other => return Err(Failure::usage(format!("{} is a '{other}' document, not a fitted model", path.display()))),
    };
    Ok(StoredModel {
        name: path.display().to_string(),
        model,
        data: parse(field("data")?, path)?,
    })
}

#[derive(Serialize)]
struct KmRow {
    time: f64,
    survival: f64,
    at_risk: usize,
    events: usize,
}

#[derive(Serialize)]
struct AucRow {
    model: String,
    time: f64,
    auc: f64,
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    match a.metric {
        Metric::Km => evaluate_km(a),
        Metric::Rmise => evaluate_rmise(a),
        Metric::Auc => evaluate_auc(a),
    }
}

fn evaluate_km(a: &EvaluateArgs) -> CmdResult {
    let path = a.input.as_ref().ok_or_else(|| Failure::usage("--metric km needs --input"))?;
    let schema = fhcure::io::CsvSchema::numeric(&a.time_col, &a.event_col, &[]);
    let raw = fhcure::io::read_raw_path(path, &schema)?;
    let km = kaplan_meier(&raw.times, &raw.events)?;
    let rows: Vec<KmRow> = (0..km.times.len())
        .map(|i| KmRow {
            time: km.times[i],
            survival: km.survival[i],
            at_risk: km.at_risk[i],
            events: km.events[i],
        })
        .collect();
    if let Some(out) = &a.out {
        write_csv(out, &rows)?;
    }
    let doc = ResultDocument {
        command: "evaluate".into(),
        config: json!({"metric": a.metric, "input": path}),
        estimates: to_value(&rows),
        intervals: Value::Null,
        diagnostics: json!({"rows": raw.len()}),
        seed: None,
    };
    emit(&doc, None)
}

fn evaluate_rmise(a: &EvaluateArgs) -> CmdResult {
    if a.models.is_empty() {
        return Err(Failure::usage("--metric rmise needs at least one --model"));
    }
    let mut errors = Vec::new();
    let mut horizon = None;
    for p in &a.models {
        let m = load_model(p)?;
        let Loaded::Proposed(params) = m.model else {
            return Err(Failure::usage(format!("{}: rmise needs a finite-horizon fit", m.name)));
        };
        let c = params.horizon();
        if horizon.is_some_and(|h: f64| h != c) {
            return Err(Failure::usage("models have different horizons"));
        }
        horizon = Some(c);
        errors.push(integrated_squared_error(
            |t| params.baseline_survival_closed(t),
            |t| true_baseline_survival(t, c, a.eta),
            c,
            a.points,
        )?);
    }
    let rmise = rmise_from_errors(&errors)?;
    let doc = ResultDocument {
        command: "evaluate".into(),
        config: json!({"metric": a.metric, "models": a.models, "eta": a.eta, "points": a.points}),
        estimates: json!({"rmise": rmise}),
        intervals: Value::Null,
        diagnostics: json!({"integrated_squared_errors": errors, "horizon": horizon}),
        seed: None,
    };
    emit(&doc, None)
}

fn evaluate_auc(a: &EvaluateArgs) -> CmdResult {
    let path = a.input.as_ref().ok_or_else(|| Failure::usage("--metric auc needs --input"))?;
    if a.models.is_empty() {
        return Err(Failure::usage("--metric auc needs at least one --model"));
    }
    let tau1 = a.tau1.ok_or_else(|| Failure::usage("--metric auc needs --tau1"))?;
    let models: Vec<StoredModel> = a.models.iter().map(|p| load_model(p)).collect::<Result<_, _>>()?;
    let tau2 = match (a.tau2, &models[0].model) {
        (Some(t), _) => t,
        (None, Loaded::Proposed(p)) => p.horizon(),
        (None, Loaded::Conventional(_)) => return Err(Failure::usage("--tau2 is required for a conventional model")),
    };
    let mut rows = Vec::new();
    let mut means = serde_json::Map::new();
    let mut holdout = Vec::new();
    for m in &models {
        let (train, test) = reload(path, &m.data)?;
        let tr = Outcomes { times: train.times(), events: train.events() };
        let te = Outcomes { times: test.times(), events: test.events() };
        let curve = match &m.model {
            Loaded::Proposed(p) => mean_cumulative_dynamic_auc(tr, te, |i, t| p.event_risk(t, test.x_tilde(i)).unwrap_or(f64::NAN), tau1, tau2)?,
            Loaded::Conventional(f) => {
                mean_cumulative_dynamic_auc(tr, te, |i, t| conventional_risk_score(f, test.x_tilde(i), t).unwrap_or(f64::NAN), tau1, tau2)?
            }
        };
        holdout.push(json!({"model": m.name, "held_out": m.data.split.is_some(), "n_test": test.len()}));
        match curve {
            Some(c) => {
                rows.extend(c.times.iter().zip(&c.auc).map(|(&time, &auc)| AucRow { model: m.name.clone(), time, auc }));
                means.insert(m.name.clone(), json!(c.mean_auc));
            }
            None => {
                means.insert(m.name.clone(), Value::Null);
            }
        }
    }
    if let Some(out) = &a.out {
        write_csv(out, &rows)?;
    }
    let doc = ResultDocument {
        command: "evaluate".into(),
        config: json!({"metric": a.metric, "input": path, "models": a.models, "tau1": tau1, "tau2": tau2}),
        estimates: json!({"mean_auc": means}),
        intervals: Value::Null,
        diagnostics: json!({"evaluation_data": holdout}),
        seed: None,
    };
    emit(&doc, None)
}

pub fn calibrate(a: &CalibrateArgs) -> CmdResult {
    let seed = resolve_seed(a.seed, a.config.as_deref())?;
    let base = scenario_a(a.scenario, a.config.as_deref(), None, seed)?;
    let cal = calibrate_scenario(&base, a.target_event, a.target_censor, a.pilot_n)?;
    let doc = ResultDocument {
        command: "calibrate".into(),
        config: json!({
            "scenario": a.scenario, "target_event": a.target_event, "target_censor": a.target_censor,
            "pilot_n": a.pilot_n, "scenario_config": base,
        }),
        estimates: json!({"b1": cal.b1, "lambda_cens": cal.lambda_cens}),
        intervals: Value::Null,
        diagnostics: to_value(&cal),
        seed: Some(seed),
    };
    emit(&doc, a.out.as_deref())
}

#[cfg(test)]
mod tests {
    use super::parse_grid;

    #[test]
    fn grid_ranges_include_the_endpoint() {
        assert_eq!(parse_grid("0.1:1.3:0.4").unwrap().len(), 4);
        assert_eq!(parse_grid("1, 2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(parse_grid("2:2:1").unwrap(), vec![2.0]);
        for bad in ["1:0:1", "0:1:0", "0:1", "a,b", ""] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}

//! Kaplan–Meier curves, RMISE, replication summaries and the mean
//! cumulative/dynamic AUC.
//!
//! At tied times events are processed before censorings, so a row censored
//! at an event time is still at risk for that event.
//!
//! The cumulative/dynamic AUC at time `t` is Uno's IPCW estimator
//!
//! `AUC(t) = Σ_i Σ_j ω_i 1{y_i ≤ t} 1{y_j > t} [1{s_i > s_j} + ½ 1{s_i = s_j}]
//!           / (Σ_i ω_i 1{y_i ≤ t} · Σ_j 1{y_j > t})`
//!
//! with `ω_i = δ_i / Ĝ(y_i)` and `Ĝ` the Kaplan–Meier estimate of the
//! censoring distribution on the training data. The mean over the grid
//! `t_1 < … < t_m` weights each `AUC(t_k)` by the drop of the test-data
//! Kaplan–Meier curve, `Ŝ(t_{k-1}) - Ŝ(t_k)` with `Ŝ(t_0) = 1`, and divides
//! by `1 - Ŝ(t_m)`.

use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

/// Right-continuous step survival curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    /// Distinct times at which the curve drops.
    pub times: Vec<f64>,
    /// Value just after each drop.
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl StepSurvival {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

fn product_limit(times: &[f64], deltas: &[bool], reverse: bool) -> Result<StepSurvival> {
    if times.len() != deltas.len() {
        return Err(CureError::InvalidInput(format!(
            "{} times and {} event flags",
            times.len(),
            deltas.len()
        )));
    }
    if times.is_empty() {
        return Err(CureError::InsufficientData("Kaplan-Meier needs at least one row".into()));
    }
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(CureError::domain(t, "[0, inf)"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = StepSurvival {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut s = 1.0;
    let mut remaining = times.len();
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut d = 0;
        let mut cens = 0;
        while k < order.len() && times[order[k]] == t {
            if deltas[order[k]] {
                d += 1;
            } else {
                cens += 1;
            }
            k += 1;
        }
        // for the censoring curve, rows with an event at t have already left
        let (jumps, risk) = if reverse { (cens, remaining - d) } else { (d, remaining) };
        if jumps > 0 {
            s *= 1.0 - jumps as f64 / risk as f64;
            out.times.push(t);
            out.survival.push(s);
            out.at_risk.push(risk);
            out.events.push(jumps);
        }
        remaining -= d + cens;
    }
    Ok(out)
}

/// Product-limit estimate of the event-time survival function.
pub fn kaplan_meier(times: &[f64], deltas: &[bool]) -> Result<StepSurvival> {
    product_limit(times, deltas, false)
}

/// Product-limit estimate of the censoring survival function `G`.
pub fn censoring_kaplan_meier(times: &[f64], deltas: &[bool]) -> Result<StepSurvival> {
    product_limit(times, deltas, true)
}

/// Evenly spaced grid `0, c/(J-1), …, c`.
pub fn rmise_grid(c: f64, j: usize) -> Vec<f64> {
    (0..j).map(|i| c * i as f64 / (j - 1) as f64).collect()
}

/// `(1/c) ∫_0^c (Ŝ - S)² dt` by the trapezoidal rule on [`rmise_grid`].
pub fn integrated_squared_error<F, G>(estimate: F, truth: G, c: f64, j: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> f64,
{
    if j < 2 {
        return Err(CureError::InvalidParameter("RMISE grid needs J >= 2".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(CureError::InvalidParameter(format!("horizon must be positive, got {c}")));
    }
    let grid = rmise_grid(c, j);
    let sq: Vec<f64> = grid
        .iter()
        .map(|&t| estimate(t).map(|e| (e - truth(t)).powi(2)))
        .collect::<Result<_>>()?;
    let h = c / (j - 1) as f64;
    let inner: f64 = sq[1..j - 1].iter().sum();
    Ok(h * (0.5 * (sq[0] + sq[j - 1]) + inner) / c)
}

/// Root of the mean integrated squared error across replications.
pub fn rmise_from_errors(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(CureError::InsufficientData("no replications".into()));
    }
    Ok((errors.iter().sum::<f64>() / errors.len() as f64).sqrt())
}

/// RMISE of estimated baseline survival curves sharing the horizon `c`.
pub fn rmise<F, G>(estimates: &[(f64, F)], truth: G, c: f64, j: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> f64,
{
    let errors = estimates
        .iter()
        .map(|(horizon, f)| {
            if *horizon != c {
                return Err(CureError::InvalidInput(format!(
                    "estimate has horizon {horizon}, expected {c}"
                )));
            }
            integrated_squared_error(f, &truth, c, j)
        })
        .collect::<Result<Vec<_>>>()?;
    rmise_from_errors(&errors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    /// Sample standard deviation; absent with a single replication.
    pub sd: Option<f64>,
    pub cp: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub parameters: Vec<ParameterSummary>,
    pub rmise: Option<f64>,
    pub replications: usize,
    pub failures: usize,
}

/// Bias, SD, coverage and mean width per parameter. `estimates[m][j]` and
/// `intervals[m][j]` belong to replication `m`, parameter `j`.
pub fn summarize(
    names: &[String],
    truth: &[f64],
    estimates: &[Vec<f64>],
    intervals: &[Vec<(f64, f64)>],
) -> Result<Vec<ParameterSummary>> {
    let m = estimates.len();
    if m == 0 || intervals.len() != m {
        return Err(CureError::InvalidInput("need matching, nonempty estimates and intervals".into()));
    }
    if names.len() != truth.len()
        || estimates.iter().any(|e| e.len() != truth.len())
        || intervals.iter().any(|e| e.len() != truth.len())
    {
        return Err(CureError::InvalidInput("parameter count mismatch".into()));
    }
    Ok((0..truth.len())
        .map(|j| {
            let vals: Vec<f64> = estimates.iter().map(|e| e[j]).collect();
            let mean = vals.iter().sum::<f64>() / m as f64;
            let sd = (m >= 2).then(|| {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
            });
            let covered = intervals
                .iter()
                .filter(|iv| iv[j].0 <= truth[j] && truth[j] <= iv[j].1)
                .count();
            let width = intervals.iter().map(|iv| iv[j].1 - iv[j].0).sum::<f64>() / m as f64;
            ParameterSummary {
                name: names[j].clone(),
                truth: truth[j],
                bias: mean - truth[j],
                sd,
                cp: covered as f64 / m as f64,
                width,
            }
        })
        .collect())
}

/// Labelled survival outcomes.
#[derive(Clone, Copy, Debug)]
pub struct Outcomes<'a> {
    pub times: &'a [f64],
    pub events: &'a [bool],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucCurve {
    pub times: Vec<f64>,
    pub auc: Vec<f64>,
    pub mean_auc: f64,
}

/// Mean cumulative/dynamic AUC over the distinct test event times in
/// `[tau1, tau2]`. `risk(i, t)` is the risk score of test row `i` at time
/// `t` (higher means earlier event). Returns `None` when no grid time has
/// both a case and a control.
pub fn mean_cumulative_dynamic_auc<R>(
    train: Outcomes<'_>,
    test: Outcomes<'_>,
    risk: R,
    tau1: f64,
    tau2: f64,
) -> Result<Option<AucCurve>>
where
    R: Fn(usize, f64) -> f64,
{
    if !(tau1 < tau2) {
        return Err(CureError::InvalidParameter(format!("need tau1 < tau2, got {tau1}, {tau2}")));
    }
    let g = censoring_kaplan_meier(train.times, train.events)?;
    let km = kaplan_meier(test.times, test.events)?;
    let n = test.times.len();
    let mut grid: Vec<f64> = (0..n)
        .filter(|&i| test.events[i] && test.times[i] >= tau1 && test.times[i] <= tau2)
        .map(|i| test.times[i])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    // IPCW weight per test case; cases beyond the training censoring support
    // would divide by zero and are dropped
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            if !test.events[i] {
                return 0.0;
            }
            let gi = g.eval(test.times[i]);
            if gi > 0.0 {
                1.0 / gi
            } else {
                0.0
            }
        })
        .collect();

    let mut times = Vec::new();
    let mut aucs = Vec::new();
    let mut controls: Vec<f64> = Vec::with_capacity(n);
    for &t in &grid {
        controls.clear();
        let mut cases: Vec<(f64, f64)> = Vec::new();
        for i in 0..n {
            if test.times[i] > t {
                controls.push(risk(i, t));
            } else if test.events[i] && weights[i] > 0.0 {
                cases.push((risk(i, t), weights[i]));
            }
        }
        if controls.is_empty() || cases.is_empty() {
            continue;
        }
        if controls.iter().chain(cases.iter().map(|c| &c.0)).any(|s| !s.is_finite()) {
            return Err(CureError::InvalidInput(format!("non-finite risk score at t = {t}")));
        }
        controls.sort_by(f64::total_cmp);
        let mut num = 0.0;
        let mut den = 0.0;
        for &(s, w) in &cases {
            let below = controls.partition_point(|&c| c < s);
            let tied = controls.partition_point(|&c| c <= s) - below;
            num += w * (below as f64 + 0.5 * tied as f64);
            den += w;
        }
        times.push(t);
        aucs.push(num / (den * controls.len() as f64));
    }
    if times.is_empty() {
        return Ok(None);
    }
    let mut prev = 1.0;
    let mut integral = 0.0;
    for (&t, &a) in times.iter().zip(&aucs) {
        let s = km.eval(t);
        integral += a * (prev - s);
        prev = s;
    }
    let mass = 1.0 - prev;
    if !(mass > 0.0) {
        return Ok(None);
    }
    Ok(Some(AucCurve {
        times,
        auc: aucs,
        mean_auc: integral / mass,
    }))
}

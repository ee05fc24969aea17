//! MAP estimation of `(b, β, α)` by EM with an `N(0, λ⁻¹ I)` prior on the
//! free spline log-weights.
//!
//! E-step responsibilities follow a three-case table: rows with an event
//! before `c` get weight 1, rows censored before `c` get the posterior
//! probability of belonging to the event group, and rows observed at or
//! beyond `c` get weight 0 whatever their event flag. Each M-step is run to
//! the inner gradient tolerance with L-BFGS, starting from the current
//! iterate, so the observed log-posterior never decreases.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CureError, Result};
use crate::likelihood::{full_softmax, incidence_objective, RowCache};
use crate::model::FiniteHorizonParams;
use crate::optim::{minimize, LbfgsConfig, Minimum};
use crate::spline::{build_knots, NormalizedBasis};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    /// L2 precision on the free entries of α.
    pub lambda: f64,
    /// Relative change of the observed log-posterior that stops EM.
    pub em_tol: f64,
    pub em_max_iter: usize,
    /// Gradient sup-norm target for each M-step.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            em_tol: 1e-8,
            em_max_iter: 500,
            inner_tol: 1e-9,
            inner_max_iter: 500,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CureError::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.em_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(CureError::InvalidParameter("tolerances must be positive".into()));
        }
        if self.em_max_iter == 0 || self.inner_max_iter == 0 {
            return Err(CureError::InvalidParameter("iteration limits must be >= 1".into()));
        }
        Ok(())
    }

    fn inner(&self) -> LbfgsConfig {
        LbfgsConfig {
            grad_tol: self.inner_tol,
            max_iter: self.inner_max_iter,
            ..LbfgsConfig::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: FiniteHorizonParams,
    pub lambda: f64,
    /// Observed log-posterior at the start and after every EM iteration.
    pub log_posterior_trace: Vec<f64>,
    /// Final E-step responsibilities.
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// M-steps that stopped above the inner gradient tolerance.
    pub inner_shortfalls: usize,
    /// Rows with an event at or after the horizon (given weight 0).
    pub late_event_rows: Vec<usize>,
}

impl FitResult {
    pub fn log_posterior(&self) -> f64 {
        *self.log_posterior_trace.last().expect("trace is never empty")
    }
}

fn check_weights(weights: &[f64], data: &Dataset) -> Result<()> {
    if weights.len() != data.len() {
        return Err(CureError::InvalidInput(format!(
            "{} weights for {} rows",
            weights.len(),
            data.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
        return Err(CureError::InvalidInput(format!(
            "weight {} at row {i} outside [0, 1]",
            weights[i]
        )));
    }
    Ok(())
}

fn check_params(params: &FiniteHorizonParams, data: &Dataset) -> Result<()> {
    if params.n_features() != data.n_features() {
        return Err(CureError::InvalidInput(format!(
            "parameters have p = {}, data has p = {}",
            params.n_features(),
            data.n_features()
        )));
    }
    if data.is_empty() {
        return Err(CureError::InsufficientData("empty dataset".into()));
    }
    Ok(())
}

/// Observed log-likelihood minus `λ/2 ‖α‖²`.
pub fn observed_log_posterior(
    params: &FiniteHorizonParams,
    data: &Dataset,
    lambda: f64,
) -> Result<f64> {
    check_params(params, data)?;
    RowCache::new(data, params.basis()).observed(&params.to_theta(), lambda, None)
}

/// Gradient of [`observed_log_posterior`] with respect to the packed vector
/// `(b, β, α_1..α_{K-1})`.
pub fn observed_log_posterior_gradient(
    params: &FiniteHorizonParams,
    data: &Dataset,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_params(params, data)?;
    let cache = RowCache::new(data, params.basis());
    let mut g = vec![0.0; cache.dim()];
    cache.observed(&params.to_theta(), lambda, Some(&mut g))?;
    Ok(g)
}

/// E-step responsibilities `w_i ∈ [0, 1]`.
pub fn e_step(params: &FiniteHorizonParams, data: &Dataset) -> Result<Vec<f64>> {
    check_params(params, data)?;
    RowCache::new(data, params.basis()).responsibilities(params.b(), params.beta(), params.weights())
}

/// Expected incidence log-likelihood `Σ w log π + (1 - w) log(1 - π)` and its
/// gradient in `b`.
pub fn incidence_q(data: &Dataset, weights: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_weights(weights, data)?;
    if b.len() != data.n_features() + 1 {
        return Err(CureError::InvalidInput("b must have length p + 1".into()));
    }
    let mut g = vec![0.0; b.len()];
    let v = incidence_objective(data, b, weights, &mut g);
    Ok((-v, g.into_iter().map(|x| -x).collect()))
}

/// Expected latency log-likelihood minus the α penalty, and its gradient in
/// `(β, α_free)`.
pub fn latency_q(
    data: &Dataset,
    basis: &NormalizedBasis,
    weights: &[f64],
    lambda: f64,
    beta: &[f64],
    alpha_free: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_weights(weights, data)?;
    if beta.len() != data.n_features() || alpha_free.len() + 1 != basis.n_basis() {
        return Err(CureError::InvalidInput("latency parameter size mismatch".into()));
    }
    let cache = RowCache::new(data, basis);
    let mut lat = beta.to_vec();
    lat.extend_from_slice(alpha_free);
    let mut g = vec![0.0; lat.len()];
    let v = cache.latency_objective(&lat, weights, lambda, &mut g);
    if !v.is_finite() {
        return Err(CureError::NumericalFailure {
            row: 0,
            message: "latency objective is not finite".into(),
        });
    }
    Ok((-v, g.into_iter().map(|x| -x).collect()))
}

/// Outcome of one M-step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub estimate: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Reached the gradient tolerance.
    pub converged: bool,
}

impl From<Minimum> for StepResult {
    fn from(m: Minimum) -> Self {
        Self {
            grad_norm: m.grad_norm(),
            iterations: m.iterations,
            converged: m.converged,
            estimate: m.x,
        }
    }
}

/// Weighted logistic regression for `b`. Under perfect separation the
/// clamped probabilities flatten the objective, so the returned
/// coefficients stay finite and `converged` reports whether the tolerance
/// was reached.
pub fn m_step_incidence(
    weights: &[f64],
    data: &Dataset,
    start: Option<&[f64]>,
    cfg: &LbfgsConfig,
) -> Result<StepResult> {
    check_weights(weights, data)?;
    let p1 = data.n_features() + 1;
    let x0 = start.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p1]);
    if x0.len() != p1 {
        return Err(CureError::InvalidInput("start b must have length p + 1".into()));
    }
    Ok(minimize(|b, g| incidence_objective(data, b, weights, g), &x0, cfg).into())
}

/// Joint maximization over `β` and the free entries of `α`. The estimate is
/// packed as `(β, α_1..α_{K-1})`.
pub fn m_step_latency(
    weights: &[f64],
    data: &Dataset,
    basis: &NormalizedBasis,
    lambda: f64,
    start: Option<&[f64]>,
    cfg: &LbfgsConfig,
) -> Result<StepResult> {
    check_weights(weights, data)?;
    let cache = RowCache::new(data, basis);
    latency_step(&cache, weights, lambda, start, cfg)
}

fn latency_step(
    cache: &RowCache<'_>,
    weights: &[f64],
    lambda: f64,
    start: Option<&[f64]>,
    cfg: &LbfgsConfig,
) -> Result<StepResult> {
    let dim = cache.p + cache.k - 1;
    if !(0..cache.n()).any(|i| cache.below[i] && weights[i] > 0.0) {
        return Err(CureError::InsufficientEvents(
            "no rows below the horizon carry positive weight".into(),
        ));
    }
    let x0 = start.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; dim]);
    if x0.len() != dim {
        return Err(CureError::InvalidInput("start must have length p + K - 1".into()));
    }
    let m = minimize(|x, g| cache.latency_objective(x, weights, lambda, g), &x0, cfg);
    if !m.value.is_finite() {
        return Err(CureError::NumericalFailure {
            row: 0,
            message: "latency M-step produced a non-finite objective".into(),
        });
    }
    Ok(m.into())
}

/// Builds the basis from the events below `c` and runs EM from zero.
pub fn fit_map(data: &Dataset, c: f64, k: usize, config: &FitConfig) -> Result<FitResult> {
    let basis = basis_for(data, c, k)?;
    fit_map_with_basis(data, basis, config, None)
}

/// Knot placement from the event times observed below `c`.
pub fn basis_for(data: &Dataset, c: f64, k: usize) -> Result<Arc<NormalizedBasis>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(CureError::InvalidParameter(format!("horizon must be positive, got {c}")));
    }
    let events = data.event_times_below(c);
    if events.is_empty() {
        return Err(CureError::InsufficientEvents(format!("no events observed before c = {c}")));
    }
    Ok(Arc::new(NormalizedBasis::new(build_knots(c, k, &events)?)))
}

/// EM on a prepared basis, optionally warm-started.
pub fn fit_map_with_basis(
    data: &Dataset,
    basis: Arc<NormalizedBasis>,
    config: &FitConfig,
    start: Option<&FiniteHorizonParams>,
) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(CureError::InsufficientData("empty dataset".into()));
    }
    let c = basis.horizon();
    if data.event_times_below(c).is_empty() {
        return Err(CureError::InsufficientEvents(format!("no events observed before c = {c}")));
    }
    let p = data.n_features();
    let k = basis.n_basis();
    let cache = RowCache::new(data, &basis);
    let mut theta = match start {
        Some(s) => {
            check_params(s, data)?;
            if s.basis().n_basis() != k {
                return Err(CureError::InvalidInput("warm start has a different K".into()));
            }
            s.to_theta()
        }
        None => vec![0.0; 2 * p + k],
    };
    let inner = config.inner();
    let late_event_rows: Vec<usize> = (0..data.len())
        .filter(|&i| data.event(i) && !cache.below[i])
        .collect();

    let mut trace = vec![cache.observed(&theta, config.lambda, None)?];
    let mut converged = false;
    let mut iterations = 0;
    let mut inner_shortfalls = 0;
    while iterations < config.em_max_iter {
        iterations += 1;
        let w = cache.responsibilities(
            &theta[..p + 1],
            &theta[p + 1..2 * p + 1],
            &full_softmax(&theta[2 * p + 1..]),
        )?;
        let inc = minimize(|b, g| incidence_objective(data, b, &w, g), &theta[..p + 1], &inner);
        let lat = latency_step(&cache, &w, config.lambda, Some(&theta[p + 1..]), &inner)?;
        inner_shortfalls += usize::from(!inc.converged) + usize::from(!lat.converged);
        theta[..p + 1].copy_from_slice(&inc.x);
        theta[p + 1..].copy_from_slice(&lat.estimate);

        let value = cache.observed(&theta, config.lambda, None)?;
        let prev = *trace.last().unwrap();
        trace.push(value);
        if (value - prev).abs() / (1.0 + value.abs()) < config.em_tol {
            converged = true;
            break;
        }
    }

    let params = FiniteHorizonParams::from_theta(&theta, p, basis)?;
    let weights = cache.responsibilities(params.b(), params.beta(), params.weights())?;
    Ok(FitResult {
        params,
        lambda: config.lambda,
        log_posterior_trace: trace,
        weights,
        converged,
        iterations,
        inner_shortfalls,
        late_event_rows,
    })
}

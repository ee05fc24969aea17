//! Infinite-horizon mixture cure model with a semiparametric Cox latency
//! and the zero-tail constraint, used as the comparison model.
//!
//! EM alternates weighted logistic regression for the incidence and a
//! weighted Cox fit for the latency. The baseline is the Breslow cumulative
//! hazard `Λ_0` with survival `exp(-Λ_0(t))` up to the last event time and 0
//! beyond it, so censored rows past the last event get weight 0.
//! Ties use the Breslow partial likelihood.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CureError, Result};
use crate::likelihood::incidence_objective;
use crate::model::{dot, Logistic};
use crate::optim::{minimize, LbfgsConfig};

const SEPARATION_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConventionalConfig {
    /// Relative change of the observed log-likelihood that stops EM.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Test hook: fix every incidence probability at 1 and skip the
    /// logistic step, leaving a plain weighted Cox fit.
    pub pin_incidence: bool,
}

impl Default for ConventionalConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            inner_tol: 1e-9,
            inner_max_iter: 500,
            pin_incidence: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConventionalFit {
    pub b_inf: Vec<f64>,
    pub beta_inf: Vec<f64>,
    /// Distinct event times in increasing order.
    pub event_times: Vec<f64>,
    /// Baseline survival just after each event time.
    pub baseline_steps: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood_trace: Vec<f64>,
    pub weights: Vec<f64>,
    /// Some fitted incidence probability is within 1e-6 of 0 or 1, the
    /// signature of perfect separation (for instance no censoring at all).
    pub separation: bool,
    pub pin_incidence: bool,
}

impl ConventionalFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }

    /// Step baseline survival: 1 before the first event, 0 after the last.
    pub fn baseline_survival(&self, t: f64) -> f64 {
        let last = *self.event_times.last().expect("at least one event");
        if t > last {
            return 0.0;
        }
        let k = self.event_times.partition_point(|&e| e <= t);
        if k == 0 {
            1.0
        } else {
            self.baseline_steps[k - 1]
        }
    }

    pub fn incidence(&self, x_tilde: &[f64]) -> f64 {
        if self.pin_incidence {
            return 1.0;
        }
        Logistic::new(self.b_inf[0] + dot(&self.b_inf[1..], x_tilde)).p
    }

    pub fn latency_survival(&self, t: f64, x_tilde: &[f64]) -> f64 {
        let s0 = self.baseline_survival(t);
        if s0 == 0.0 {
            0.0
        } else {
            (s0.ln() * dot(&self.beta_inf, x_tilde).exp()).exp()
        }
    }

    pub fn population_survival(&self, t: f64, x_tilde: &[f64]) -> f64 {
        let pi = self.incidence(x_tilde);
        (1.0 - pi) + pi * self.latency_survival(t, x_tilde)
    }
}

/// `1 - S_pop(t | x)`; nondecreasing in `t`, equal to `π_∞(x)` past the
/// last event time.
pub fn conventional_risk_score(fit: &ConventionalFit, x_tilde: &[f64], t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(CureError::domain(t, "[0, inf)"));
    }
    if x_tilde.len() != fit.beta_inf.len() {
        return Err(CureError::InvalidInput(format!(
            "expected {} covariates, got {}",
            fit.beta_inf.len(),
            x_tilde.len()
        )));
    }
    Ok(1.0 - fit.population_survival(t, x_tilde))
}

/// Rows sorted by time with the distinct event times and their groups.
struct RiskSets<'a> {
    data: &'a Dataset,
    /// Row indices by decreasing time.
    desc: Vec<usize>,
    event_times: Vec<f64>,
    /// Event rows at each distinct event time.
    groups: Vec<Vec<usize>>,
}

impl<'a> RiskSets<'a> {
    fn new(data: &'a Dataset) -> Self {
        let mut desc: Vec<usize> = (0..data.len()).collect();
        desc.sort_by(|&a, &b| data.time(b).total_cmp(&data.time(a)));
        let mut event_rows: Vec<usize> = (0..data.len()).filter(|&i| data.event(i)).collect();
        event_rows.sort_by(|&a, &b| data.time(a).total_cmp(&data.time(b)));
        let mut event_times: Vec<f64> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in event_rows {
            let t = data.time(i);
            if event_times.last() == Some(&t) {
                groups.last_mut().unwrap().push(i);
            } else {
                event_times.push(t);
                groups.push(vec![i]);
            }
        }
        Self {
            data,
            desc,
            event_times,
            groups,
        }
    }

    /// Weighted risk-set sums `Σ_{t_j ≥ t_k} w_j e^{x_jβ}` and the matching
    /// first moments, one entry per event time.
    fn risk_sums(&self, beta: &[f64], w: &[f64], with_moments: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = beta.len();
        let m = self.event_times.len();
        let mut s0 = vec![0.0; m];
        let mut s1 = if with_moments { vec![vec![0.0; p]; m] } else { Vec::new() };
        let mut acc0 = 0.0;
        let mut acc1 = vec![0.0; p];
        let mut pos = 0;
        for k in (0..m).rev() {
            let tk = self.event_times[k];
            while pos < self.desc.len() && self.data.time(self.desc[pos]) >= tk {
                let j = self.desc[pos];
                let x = self.data.x_tilde(j);
                let r = w[j] * dot(beta, x).exp();
                acc0 += r;
                if with_moments {
                    for (a, xv) in acc1.iter_mut().zip(x) {
                        *a += r * xv;
                    }
                }
                pos += 1;
            }
            s0[k] = acc0;
            if with_moments {
                s1[k].copy_from_slice(&acc1);
            }
        }
        (s0, s1)
    }

    /// Negative weighted Breslow log partial likelihood and its gradient.
    fn neg_partial_likelihood(&self, beta: &[f64], w: &[f64], grad: &mut [f64]) -> f64 {
        let (s0, s1) = self.risk_sums(beta, w, true);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (k, group) in self.groups.iter().enumerate() {
            let dk: f64 = group.iter().map(|&i| w[i]).sum();
            if dk == 0.0 {
                continue;
            }
            if !(s0[k] > 0.0) || !s0[k].is_finite() {
                grad.iter_mut().for_each(|g| *g = f64::NAN);
                return f64::NAN;
            }
            for &i in group {
                let x = self.data.x_tilde(i);
                value += w[i] * dot(beta, x);
                for (g, xv) in grad.iter_mut().zip(x) {
                    *g += w[i] * xv;
                }
            }
            value -= dk * s0[k].ln();
            for (g, m1) in grad.iter_mut().zip(&s1[k]) {
                *g -= dk * m1 / s0[k];
            }
        }
        grad.iter_mut().for_each(|g| *g = -*g);
        -value
    }

    /// Breslow cumulative hazard at each event time.
    fn breslow(&self, beta: &[f64], w: &[f64]) -> Vec<f64> {
        let (s0, _) = self.risk_sums(beta, w, false);
        let mut cum = 0.0;
        self.groups
            .iter()
            .zip(&s0)
            .map(|(group, &s)| {
                let dk: f64 = group.iter().map(|&i| w[i]).sum();
                if dk > 0.0 {
                    cum += dk / s;
                }
                cum
            })
            .collect()
    }
}

struct State {
    b: Vec<f64>,
    beta: Vec<f64>,
    cumhaz: Vec<f64>,
}

impl State {
    fn pi(&self, x: &[f64], pinned: bool) -> Logistic {
        if pinned {
            Logistic { p: 1.0, dp: 0.0 }
        } else {
            Logistic::new(self.b[0] + dot(&self.b[1..], x))
        }
    }
}

/// `Λ_0(t)` and the jump at `t`, or `None` past the last event.
fn hazard_at(rs: &RiskSets<'_>, cumhaz: &[f64], t: f64) -> Option<(f64, f64)> {
    let last = *rs.event_times.last()?;
    if t > last {
        return None;
    }
    let k = rs.event_times.partition_point(|&e| e <= t);
    if k == 0 {
        return Some((0.0, 0.0));
    }
    let jump = if rs.event_times[k - 1] == t {
        cumhaz[k - 1] - if k >= 2 { cumhaz[k - 2] } else { 0.0 }
    } else {
        0.0
    };
    Some((cumhaz[k - 1], jump))
}

fn e_step(rs: &RiskSets<'_>, st: &State, pinned: bool) -> Vec<f64> {
    let data = rs.data;
    (0..data.len())
        .map(|i| {
            if data.event(i) {
                return 1.0;
            }
            let x = data.x_tilde(i);
            match hazard_at(rs, &st.cumhaz, data.time(i)) {
                None => 0.0,
                Some((cum, _)) => {
                    let pi = st.pi(x, pinned).p;
                    let s = (-cum * dot(&st.beta, x).exp()).exp();
                    let num = pi * s;
                    if num == 0.0 {
                        0.0
                    } else {
                        num / ((1.0 - pi) + num)
                    }
                }
            }
        })
        .collect()
}

fn observed_log_likelihood(rs: &RiskSets<'_>, st: &State, pinned: bool) -> Result<f64> {
    let data = rs.data;
    let mut total = 0.0;
    for i in 0..data.len() {
        let x = data.x_tilde(i);
        let pi = st.pi(x, pinned).p;
        let r = dot(&st.beta, x).exp();
        let term = match hazard_at(rs, &st.cumhaz, data.time(i)) {
            Some((cum, jump)) if data.event(i) => pi.ln() + jump.ln() + r.ln() - cum * r,
            Some((cum, _)) => ((1.0 - pi) + pi * (-cum * r).exp()).ln(),
            None => (1.0 - pi).ln(),
        };
        if pinned && !data.event(i) && term == f64::NEG_INFINITY {
            // a pinned fit assigns no mass beyond the last event
            continue;
        }
        if !term.is_finite() {
            return Err(CureError::NumericalFailure {
                row: i,
                message: format!("non-finite conventional log-likelihood term {term}"),
            });
        }
        total += term;
    }
    Ok(total)
}

/// EM fit of the conventional mixture cure model.
pub fn fit_conventional(data: &Dataset, config: &ConventionalConfig) -> Result<ConventionalFit> {
    if data.is_empty() {
        return Err(CureError::InsufficientData("empty dataset".into()));
    }
    if !data.events().iter().any(|&e| e) {
        return Err(CureError::InsufficientEvents("all rows are censored".into()));
    }
    if config.max_iter == 0 || !(config.tol > 0.0) {
        return Err(CureError::InvalidParameter("invalid EM settings".into()));
    }
    let p = data.n_features();
    let pinned = config.pin_incidence;
    let rs = RiskSets::new(data);
    let inner = LbfgsConfig {
        grad_tol: config.inner_tol,
        max_iter: config.inner_max_iter,
        ..LbfgsConfig::default()
    };
    let ones = vec![1.0; data.len()];
    let mut st = State {
        b: vec![0.0; p + 1],
        beta: vec![0.0; p],
        cumhaz: rs.breslow(&vec![0.0; p], &ones),
    };
    let mut trace = vec![observed_log_likelihood(&rs, &st, pinned)?];
    let mut converged = false;
    let mut iterations = 0;
    let mut w = e_step(&rs, &st, pinned);
    while iterations < config.max_iter {
        iterations += 1;
        if !pinned {
            st.b = minimize(|b, g| incidence_objective(data, b, &w, g), &st.b, &inner).x;
        }
        let m = minimize(|beta, g| rs.neg_partial_likelihood(beta, &w, g), &st.beta, &inner);
        if !m.value.is_finite() {
            return Err(CureError::NumericalFailure {
                row: 0,
                message: "partial likelihood is not finite".into(),
            });
        }
        st.beta = m.x;
        st.cumhaz = rs.breslow(&st.beta, &w);
        let value = observed_log_likelihood(&rs, &st, pinned)?;
        let prev = *trace.last().unwrap();
        trace.push(value);
        w = e_step(&rs, &st, pinned);
        if (value - prev).abs() / (1.0 + value.abs()) < config.tol {
            converged = true;
            break;
        }
    }
    let separation = !pinned
        && (0..data.len()).any(|i| {
            let p = st.pi(data.x_tilde(i), false).p;
            p <= SEPARATION_EPS || p >= 1.0 - SEPARATION_EPS
        });
    Ok(ConventionalFit {
        b_inf: st.b,
        beta_inf: st.beta,
        baseline_steps: st.cumhaz.iter().map(|c| (-c).exp()).collect(),
        event_times: rs.event_times,
        converged,
        iterations,
        log_likelihood_trace: trace,
        weights: w,
        separation,
        pin_incidence: pinned,
    })
}

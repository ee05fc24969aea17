//! Row-level likelihood machinery shared by the EM fit, the Laplace
//! approximation and the empirical Bayes loop.
//!
//! Spline values and tail integrals depend only on the observed times, so
//! they are computed once per (dataset, basis) pair.

use crate::data::Dataset;
use crate::error::{CureError, Result};
use crate::model::{dot, softmax, Logistic, LOG_SURVIVAL_FLOOR};
use crate::spline::NormalizedBasis;

pub(crate) struct RowCache<'a> {
    pub data: &'a Dataset,
    pub p: usize,
    pub k: usize,
    pub below: Vec<bool>,
    values: Vec<f64>,
    tails: Vec<f64>,
}

/// Per-row latency evaluation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LatencyTerms {
    pub log_f: f64,
    pub log_s: f64,
}

impl<'a> RowCache<'a> {
    pub fn new(data: &'a Dataset, basis: &NormalizedBasis) -> Self {
        let k = basis.n_basis();
        let c = basis.horizon();
        let n = data.len();
        let mut values = vec![0.0; n * k];
        let mut tails = vec![0.0; n * k];
        let below: Vec<bool> = data.times().iter().map(|&t| t < c).collect();
        for i in 0..n {
            if below[i] {
                basis
                    .fill(data.time(i), &mut values[i * k..(i + 1) * k], &mut tails[i * k..(i + 1) * k])
                    .expect("time inside [0, c)");
            }
        }
        Self {
            data,
            p: data.n_features(),
            k,
            below,
            values,
            tails,
        }
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Dimension of the packed parameter vector `(b, β, α_free)`.
    pub fn dim(&self) -> usize {
        2 * self.p + self.k
    }

    fn eta_incidence(&self, i: usize, b: &[f64]) -> f64 {
        b[0] + dot(&b[1..], self.data.x_tilde(i))
    }

    /// Latency log-density and log-survival for row `i` (which must satisfy
    /// `t < c`). When `grad` is given, `cf * ∇log f_c + cs * ∇log S_c` with
    /// respect to `(β, α_free)` is added into it.
    pub fn latency(
        &self,
        i: usize,
        beta: &[f64],
        gamma: &[f64],
        grad: Option<(&mut [f64], f64, f64)>,
    ) -> std::result::Result<LatencyTerms, usize> {
        let k = self.k;
        let x = self.data.x_tilde(i);
        let vals = &self.values[i * k..(i + 1) * k];
        let tails = &self.tails[i * k..(i + 1) * k];
        let xb = dot(beta, x);
        let r = xb.exp();
        let f0 = dot(gamma, vals);
        let s0 = dot(gamma, tails);
        if !(f0 > 0.0 && f0.is_finite() && r.is_finite()) {
            return Err(i);
        }
        let raw_log_s0 = s0.ln();
        let floored = !(raw_log_s0 > LOG_SURVIVAL_FLOOR);
        let ls = if floored { LOG_SURVIVAL_FLOOR } else { raw_log_s0 };
        let terms = LatencyTerms {
            log_f: xb + f0.ln() + (r - 1.0) * ls,
            log_s: r * ls,
        };
        if let Some((g, cf, cs)) = grad {
            let cx = cf * (1.0 + r * ls) + cs * r * ls;
            for j in 0..self.p {
                g[j] += cx * x[j];
            }
            let cs0 = cf * (r - 1.0) + cs * r;
            for m in 0..k - 1 {
                let dlf0 = gamma[m] * (vals[m] / f0 - 1.0);
                let dls0 = if floored { 0.0 } else { gamma[m] * (tails[m] / s0 - 1.0) };
                g[self.p + m] += cf * dlf0 + cs0 * dls0;
            }
        }
        Ok(terms)
    }

    /// E-step responsibilities.
    pub fn responsibilities(&self, b: &[f64], beta: &[f64], gamma: &[f64]) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.n()];
        for (i, wi) in w.iter_mut().enumerate() {
            if !self.below[i] {
                *wi = 0.0;
            } else if self.data.event(i) {
                *wi = 1.0;
            } else {
                let pi = Logistic::new(self.eta_incidence(i, b)).p;
                let lt = self.latency(i, beta, gamma, None).map_err(numerical)?;
                let s = lt.log_s.exp();
                *wi = pi * s / ((1.0 - pi) + pi * s);
            }
        }
        Ok(w)
    }

    /// Negative penalized expected latency log-likelihood over
    /// `(β, α_free)` and its gradient. Non-finite when any row fails.
    pub fn latency_objective(&self, lat: &[f64], w: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let p = self.p;
        let beta = &lat[..p];
        let alpha_free = &lat[p..];
        let gamma = full_softmax(alpha_free);
        let mut acc = vec![0.0; lat.len()];
        let mut value = 0.0;
        for i in 0..self.n() {
            let wi = w[i];
            if wi == 0.0 || !self.below[i] {
                continue;
            }
            let (cf, cs) = if self.data.event(i) { (wi, 0.0) } else { (0.0, wi) };
            match self.latency(i, beta, &gamma, Some((&mut acc, cf, cs))) {
                Ok(lt) => value += cf * lt.log_f + cs * lt.log_s,
                Err(_) => {
                    grad.iter_mut().for_each(|g| *g = f64::NAN);
                    return f64::NAN;
                }
            }
        }
        let pen: f64 = alpha_free.iter().map(|a| a * a).sum();
        value -= 0.5 * lambda * pen;
        for (m, a) in alpha_free.iter().enumerate() {
            acc[p + m] -= lambda * a;
        }
        for (g, a) in grad.iter_mut().zip(&acc) {
            *g = -a;
        }
        -value
    }

    /// Observed log-likelihood minus `λ/2 ‖α‖²` at packed `theta`, with its
    /// gradient when requested.
    pub fn observed(&self, theta: &[f64], lambda: f64, mut grad: Option<&mut [f64]>) -> Result<f64> {
        let p = self.p;
        let b = &theta[..p + 1];
        let beta = &theta[p + 1..2 * p + 1];
        let alpha_free = &theta[2 * p + 1..];
        let gamma = full_softmax(alpha_free);
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut value = 0.0;
        for i in 0..self.n() {
            let lg = Logistic::new(self.eta_incidence(i, b));
            let (term, db) = if !self.below[i] {
                ((1.0 - lg.p).ln(), -lg.dp / (1.0 - lg.p))
            } else if self.data.event(i) {
                let lat_grad = grad.as_deref_mut().map(|g| (&mut g[p + 1..], 1.0, 0.0));
                let lt = self.latency(i, beta, &gamma, lat_grad).map_err(numerical)?;
                (lg.p.ln() + lt.log_f, lg.dp / lg.p)
            } else {
                let lt = self.latency(i, beta, &gamma, None).map_err(numerical)?;
                let s = lt.log_s.exp();
                let mix = (1.0 - lg.p) + lg.p * s;
                if let Some(g) = grad.as_deref_mut() {
                    let wi = lg.p * s / mix;
                    self.latency(i, beta, &gamma, Some((&mut g[p + 1..], 0.0, wi)))
                        .map_err(numerical)?;
                }
                (mix.ln(), lg.dp * (s - 1.0) / mix)
            };
            if !term.is_finite() {
                return Err(CureError::NumericalFailure {
                    row: i,
                    message: format!("non-finite log-likelihood term {term}"),
                });
            }
            value += term;
            if let Some(g) = grad.as_deref_mut() {
                g[0] += db;
                for (gj, x) in g[1..p + 1].iter_mut().zip(self.data.x_tilde(i)) {
                    *gj += db * x;
                }
            }
        }
        let pen: f64 = alpha_free.iter().map(|a| a * a).sum();
        if let Some(g) = grad {
            for (m, a) in alpha_free.iter().enumerate() {
                g[2 * p + 1 + m] -= lambda * a;
            }
        }
        Ok(value - 0.5 * lambda * pen)
    }
}

/// Negative expected incidence log-likelihood and its gradient in `b`.
pub(crate) fn incidence_objective(data: &Dataset, b: &[f64], w: &[f64], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut value = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let x = data.x_tilde(i);
        let lg = Logistic::new(b[0] + dot(&b[1..], x));
        value -= wi * lg.p.ln() + (1.0 - wi) * (1.0 - lg.p).ln();
        let d = -(wi / lg.p - (1.0 - wi) / (1.0 - lg.p)) * lg.dp;
        if d != 0.0 {
            grad[0] += d;
            for (g, xj) in grad[1..].iter_mut().zip(x) {
                *g += d * xj;
            }
        }
    }
    value
}

fn numerical(row: usize) -> CureError {
    CureError::NumericalFailure {
        row,
        message: "non-finite latency term".into(),
    }
}

/// Softmax of `(α_free, 0)`.
pub(crate) fn full_softmax(alpha_free: &[f64]) -> Vec<f64> {
    let mut a = alpha_free.to_vec();
    a.push(0.0);
    softmax(&a)
}

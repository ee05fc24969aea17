//! Closed-form quantities of the finite-horizon mixture cure model.
//!
//! The population is split by whether the event happens before the horizon
//! `c`. Incidence `π_c(x)` is logistic in `x = (1, x̃)`; the latency
//! survival is `S_c(t | x̃) = S_0c(t)^{exp(x̃ᵀβ)}` where the baseline density
//! `f_0c` is a softmax-weighted mixture of normalized cubic B-splines on
//! `[0, c)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};
use crate::spline::{KnotVector, NormalizedBasis};

/// Lower bound applied to `log S_0c(t)` before raising to `exp(x̃ᵀβ)`.
pub const LOG_SURVIVAL_FLOOR: f64 = -700.0;

/// Incidence probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Softmax of `alpha`, with the maximum subtracted first.
pub fn mixture_weights(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(CureError::InvalidParameter("alpha is empty".into()));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(CureError::InvalidParameter("non-finite alpha entry".into()));
    }
    Ok(softmax(alpha))
}

pub(crate) fn softmax(alpha: &[f64]) -> Vec<f64> {
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = alpha.iter().map(|a| (a - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Clamped logistic probability and its derivative with respect to the
/// linear predictor (zero where the clamp is active).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Logistic {
    pub p: f64,
    pub dp: f64,
}

impl Logistic {
    pub fn new(eta: f64) -> Self {
        let p = if eta >= 0.0 {
            1.0 / (1.0 + (-eta).exp())
        } else {
            let e = eta.exp();
            e / (1.0 + e)
        };
        if p < PROB_CLAMP {
            Logistic { p: PROB_CLAMP, dp: 0.0 }
        } else if p > 1.0 - PROB_CLAMP {
            Logistic {
                p: 1.0 - PROB_CLAMP,
                dp: 0.0,
            }
        } else {
            Logistic { p, dp: p * (1.0 - p) }
        }
    }
}

/// `π_c(x; b)`, with `x` including the leading 1.
pub fn incidence(b: &[f64], x: &[f64]) -> Result<f64> {
    if b.len() != x.len() {
        return Err(CureError::InvalidInput(format!(
            "incidence: {} coefficients for {} covariates",
            b.len(),
            x.len()
        )));
    }
    Ok(Logistic::new(dot(b, x)).p)
}

/// `exp((x₁ - x₂)ᵀβ)`.
pub fn hazard_ratio(beta: &[f64], x1: &[f64], x2: &[f64]) -> Result<f64> {
    if beta.len() != x1.len() || beta.len() != x2.len() {
        return Err(CureError::InvalidInput(
            "hazard_ratio: vectors must have equal length".into(),
        ));
    }
    Ok(beta
        .iter()
        .zip(x1.iter().zip(x2))
        .map(|(b, (u, v))| b * (u - v))
        .sum::<f64>()
        .exp())
}

/// Parameters `(b, β, α)` together with the spline basis they act on.
///
/// `alpha` has length `K` and its last entry is pinned at zero.
#[derive(Clone, Debug)]
pub struct FiniteHorizonParams {
    b: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    basis: Arc<NormalizedBasis>,
}

impl FiniteHorizonParams {
    pub fn new(
        b: Vec<f64>,
        beta: Vec<f64>,
        alpha: Vec<f64>,
        basis: Arc<NormalizedBasis>,
    ) -> Result<Self> {
        if b.len() != beta.len() + 1 {
            return Err(CureError::InvalidParameter(format!(
                "b has length {}, expected p + 1 = {}",
                b.len(),
                beta.len() + 1
            )));
        }
        if alpha.len() != basis.n_basis() {
            return Err(CureError::InvalidParameter(format!(
                "alpha has length {}, expected K = {}",
                alpha.len(),
                basis.n_basis()
            )));
        }
        if *alpha.last().unwrap() != 0.0 {
            return Err(CureError::InvalidParameter(
                "last alpha entry must be 0".into(),
            ));
        }
        if b.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(CureError::InvalidParameter("non-finite coefficient".into()));
        }
        let gamma = mixture_weights(&alpha)?;
        Ok(Self {
            b,
            beta,
            alpha,
            gamma,
            basis,
        })
    }

    /// All-zero start: `b = 0`, `β = 0`, uniform mixture weights.
    pub fn zeros(p: usize, basis: Arc<NormalizedBasis>) -> Self {
        let k = basis.n_basis();
        Self::new(vec![0.0; p + 1], vec![0.0; p], vec![0.0; k], basis)
            .expect("zero parameters are valid")
    }

    /// Builds parameters from the packed vector `(b, β, α_1..α_{K-1})`.
    pub fn from_theta(theta: &[f64], p: usize, basis: Arc<NormalizedBasis>) -> Result<Self> {
        let k = basis.n_basis();
        if theta.len() != 2 * p + k {
            return Err(CureError::InvalidParameter(format!(
                "theta has length {}, expected 2p + K = {}",
                theta.len(),
                2 * p + k
            )));
        }
        let mut alpha = theta[2 * p + 1..].to_vec();
        alpha.push(0.0);
        Self::new(theta[..p + 1].to_vec(), theta[p + 1..2 * p + 1].to_vec(), alpha, basis)
    }

    /// Packed vector `(b, β, α_1..α_{K-1})`.
    pub fn to_theta(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.alpha[..self.alpha.len() - 1]);
        v
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Mixture weights `γ(α)`.
    pub fn weights(&self) -> &[f64] {
        &self.gamma
    }

    pub fn basis(&self) -> &Arc<NormalizedBasis> {
        &self.basis
    }

    pub fn knots(&self) -> &KnotVector {
        self.basis.knot_vector()
    }

    pub fn horizon(&self) -> f64 {
        self.basis.horizon()
    }

    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    fn check_open(&self, t: f64) -> Result<()> {
        let c = self.horizon();
        if !(t >= 0.0 && t < c) {
            return Err(CureError::domain(t, format!("[0, {c})")));
        }
        Ok(())
    }

    fn check_x_tilde(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.beta.len() {
            return Err(CureError::InvalidInput(format!(
                "expected {} covariates, got {}",
                self.beta.len(),
                x.len()
            )));
        }
        Ok(())
    }

    fn density_and_survival(&self, t: f64) -> (f64, f64) {
        let k = self.basis.n_basis();
        let mut values = vec![0.0; k];
        let mut tails = vec![0.0; k];
        self.basis
            .fill(t, &mut values, &mut tails)
            .expect("t already checked against the horizon");
        (dot(&self.gamma, &values), dot(&self.gamma, &tails))
    }

    /// `f_0c(t) = Σ γ_i B̃_i(t)` on `[0, c)`.
    pub fn baseline_density(&self, t: f64) -> Result<f64> {
        self.check_open(t)?;
        Ok(self.density_and_survival(t).0)
    }

    /// `S_0c(t) = 1 - Σ γ_i ∫_0^t B̃_i`, evaluated as `Σ γ_i ∫_t^c B̃_i` to
    /// stay accurate near the horizon.
    pub fn baseline_survival(&self, t: f64) -> Result<f64> {
        self.check_open(t)?;
        Ok(self.density_and_survival(t).1)
    }

    /// Baseline survival on the closed interval `[0, c]`, with value 0 at `c`.
    pub fn baseline_survival_closed(&self, t: f64) -> Result<f64> {
        let c = self.horizon();
        if !(0.0..=c).contains(&t) {
            return Err(CureError::domain(t, format!("[0, {c}]")));
        }
        Ok(self.density_and_survival(t).1)
    }

    fn log_baseline_survival(&self, t: f64) -> f64 {
        self.density_and_survival(t).1.ln().max(LOG_SURVIVAL_FLOOR)
    }

    /// `S_c(t | x̃) = S_0c(t)^{exp(x̃ᵀβ)}`.
    pub fn latency_survival(&self, t: f64, x_tilde: &[f64]) -> Result<f64> {
        self.check_open(t)?;
        self.check_x_tilde(x_tilde)?;
        let r = dot(&self.beta, x_tilde).exp();
        Ok((r * self.log_baseline_survival(t)).exp())
    }

    /// `f_c(t | x̃) = exp(x̃ᵀβ) f_0c(t) S_0c(t)^{exp(x̃ᵀβ) - 1}`.
    pub fn latency_density(&self, t: f64, x_tilde: &[f64]) -> Result<f64> {
        self.check_open(t)?;
        self.check_x_tilde(x_tilde)?;
        let r = dot(&self.beta, x_tilde).exp();
        let (f0, s0) = self.density_and_survival(t);
        let log_s0 = s0.ln().max(LOG_SURVIVAL_FLOOR);
        Ok(r * f0 * ((r - 1.0) * log_s0).exp())
    }

    /// `h_c(t | x̃) = f_c / S_c`.
    pub fn latency_hazard(&self, t: f64, x_tilde: &[f64]) -> Result<f64> {
        Ok(self.latency_density(t, x_tilde)? / self.latency_survival(t, x_tilde)?)
    }

    /// `π_c(x)` for `x = (1, x̃)`.
    pub fn incidence(&self, x: &[f64]) -> Result<f64> {
        incidence(&self.b, x)
    }

    /// `1 - S_pop(t | x̃)`, the probability of an event before `t`, for any
    /// `t >= 0`. From `c` on it equals `π_c(x)`.
    pub fn event_risk(&self, t: f64, x_tilde: &[f64]) -> Result<f64> {
        self.check_x_tilde(x_tilde)?;
        if !(t >= 0.0) {
            return Err(CureError::domain(t, "[0, inf)"));
        }
        let pi = incidence(&self.b, &[&[1.0][..], x_tilde].concat())?;
        if t >= self.horizon() {
            return Ok(pi);
        }
        Ok(pi * (1.0 - self.latency_survival(t, x_tilde)?))
    }

    /// `S_pop(t | x) = 1 - π_c(x) + π_c(x) S_c(t | x̃)` on `[0, c)`.
    pub fn population_survival(&self, t: f64, x: &[f64]) -> Result<f64> {
        let pi = self.incidence(x)?;
        let s = self.latency_survival(t, &x[1..])?;
        Ok((1.0 - pi) + pi * s)
    }
}

/// Serializable snapshot of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub horizon: f64,
    pub knots: Vec<f64>,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl ModelSnapshot {
    pub fn from_params(params: &FiniteHorizonParams, feature_names: &[String]) -> Self {
        Self {
            horizon: params.horizon(),
            knots: params.knots().knots().to_vec(),
            b: params.b().to_vec(),
            beta: params.beta().to_vec(),
            alpha: params.alpha().to_vec(),
            feature_names: feature_names.to_vec(),
        }
    }

    pub fn to_params(&self) -> Result<FiniteHorizonParams> {
        let kv = KnotVector::new(self.knots.clone(), self.horizon)?;
        FiniteHorizonParams::new(
            self.b.clone(),
            self.beta.clone(),
            self.alpha.clone(),
            Arc::new(NormalizedBasis::new(kv)),
        )
    }
}

/// Labels for the packed `(b, β)` coordinates: `incidence:(intercept)`,
/// `incidence:<name>` per feature, then `latency:<name>` per feature.
pub fn coefficient_labels(feature_names: &[String]) -> Vec<String> {
    std::iter::once("incidence:(intercept)".to_string())
        .chain(feature_names.iter().map(|f| format!("incidence:{f}")))
        .chain(feature_names.iter().map(|f| format!("latency:{f}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::build_knots;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> Arc<NormalizedBasis> {
        let times: Vec<f64> = (0..50).map(|k| 0.1 + 0.19 * k as f64).collect();
        Arc::new(NormalizedBasis::new(build_knots(10.0, 7, &times).unwrap()))
    }

    fn random_params(rng: &mut ChaCha8Rng, p: usize) -> FiniteHorizonParams {
        let b: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-0.8..0.8)).collect();
        let mut alpha: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        alpha.push(0.0);
        FiniteHorizonParams::new(b, beta, alpha, basis()).unwrap()
    }

    /// Gauss–Legendre 5-point rule on each of `n` panels, refined near `c`
    /// where the density can have an integrable singularity.
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683,
            0.538_469_310_105_683,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
            0.236_926_885_056_189,
        ];
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for k in 0..n {
            let m = a + (k as f64 + 0.5) * h;
            for q in 0..5 {
                s += W[q] * f(m + 0.5 * h * X[q]) * 0.5 * h;
            }
        }
        s
    }

    /// Integral over [0, c) with geometric refinement towards c.
    fn integrate_to_horizon(f: impl Fn(f64) -> f64, c: f64) -> f64 {
        let mut total = integrate(&f, 0.0, 0.5 * c, 400);
        let mut lo = 0.5 * c;
        // stop while the nodes are still strictly below c
        for _ in 0..40 {
            let hi = lo + 0.5 * (c - lo);
            total += integrate(&f, lo, hi, 40);
            lo = hi;
        }
        total
    }

    #[test]
    fn softmax_examples() {
        let w = mixture_weights(&[0.0; 5]).unwrap();
        w.iter().for_each(|v| assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-15));
        let w = mixture_weights(&[2f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(w[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0 / 3.0, epsilon = 1e-15);
        let w = mixture_weights(&[700.0, -300.0, 0.0]).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
        assert!(mixture_weights(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: Vec<f64> = (0..9).map(|_| rng.random_range(-30.0..30.0)).collect();
            let s: f64 = mixture_weights(&a).unwrap().iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn alpha_pin_is_enforced() {
        let b = basis();
        let err = FiniteHorizonParams::new(vec![0.0], vec![], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0], b);
        assert!(matches!(err, Err(CureError::InvalidParameter(_))));
    }

    #[test]
    fn uniform_baseline_density_is_basis_average() {
        let params = FiniteHorizonParams::zeros(0, basis());
        let bs = params.basis().clone();
        for &t in &[0.0, 1.7, 4.2, 9.9] {
            let avg: f64 = (0..7).map(|i| bs.eval(i, t).unwrap()).sum::<f64>() / 7.0;
            assert_abs_diff_eq!(params.baseline_density(t).unwrap(), avg, epsilon = 1e-14);
        }
        assert!(params.baseline_density(10.0).is_err());
        assert!(params.baseline_density(-1e-9).is_err());
    }

    #[test]
    fn baseline_density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let params = random_params(&mut rng, 1);
            let total = integrate_to_horizon(|t| params.baseline_density(t).unwrap(), 10.0);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn baseline_survival_boundaries() {
        let params = FiniteHorizonParams::zeros(0, basis());
        assert_abs_diff_eq!(params.baseline_survival(0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(params.baseline_survival(10.0 * (1.0 - 1e-12)).unwrap() < 1e-6);
        let bs = params.basis();
        let expected = 1.0 - (0..7).map(|i| bs.cumulative(i, 5.0).unwrap()).sum::<f64>() / 7.0;
        assert_abs_diff_eq!(params.baseline_survival(5.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn baseline_survival_strictly_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let params = random_params(&mut rng, 1);
            let grid: Vec<f64> = (0..1000).map(|j| 10.0 * j as f64 / 1000.0).collect();
            let s: Vec<f64> = grid.iter().map(|&t| params.baseline_survival(t).unwrap()).collect();
            assert!(s.windows(2).all(|w| w[1] < w[0]));
            // near c the survival is the remaining sliver of density mass
            let h = 0.01;
            let mid = params.baseline_density(10.0 - 0.5 * h).unwrap();
            assert_relative_eq!(s[999] / h, mid, max_relative = 1e-3);
        }
    }

    #[test]
    fn latency_reduces_to_baseline_when_beta_zero() {
        let params = FiniteHorizonParams::new(
            vec![0.0, 0.0],
            vec![0.0],
            vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.2, 0.0],
            basis(),
        )
        .unwrap();
        for &t in &[0.0, 2.0, 7.5] {
            assert_eq!(
                params.latency_survival(t, &[3.0]).unwrap(),
                params.baseline_survival(t).unwrap().ln().exp()
            );
            assert_relative_eq!(
                params.latency_density(t, &[3.0]).unwrap(),
                params.baseline_density(t).unwrap(),
                max_relative = 1e-14
            );
        }
        assert_eq!(params.latency_survival(0.0, &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn latency_survival_squares_when_linear_predictor_is_ln2() {
        let params =
            FiniteHorizonParams::new(vec![0.0, 0.0], vec![2f64.ln()], vec![0.0; 7], basis())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let t = rng.random_range(0.0..10.0);
            let s0 = params.baseline_survival(t).unwrap();
            assert_relative_eq!(
                params.latency_survival(t, &[1.0]).unwrap(),
                s0 * s0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn latency_density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let params = random_params(&mut rng, 2);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
            let total = integrate_to_horizon(|t| params.latency_density(t, &x).unwrap(), 10.0);
            // with exp(x̃ᵀβ) < 1 the density has an integrable spike at c, so
            // the mass left past the last quadrature node is added back
            let last = 10.0 - 5.0 * 2f64.powi(-40);
            let rest = params.latency_survival(last, &x).unwrap();
            assert_abs_diff_eq!(total + rest, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn latency_density_is_minus_survival_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-5;
        for _ in 0..50 {
            let params = random_params(&mut rng, 2);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = rng.random_range(0.05..9.5);
            let fd = -(params.latency_survival(t + h, &x).unwrap()
                - params.latency_survival(t - h, &x).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(fd, params.latency_density(t, &x).unwrap(), epsilon = 1e-5);
        }
    }

    #[test]
    fn hazard_ratio_examples() {
        assert_eq!(hazard_ratio(&[0.4, -0.2], &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            hazard_ratio(&[0.3], &[1.0], &[0.0]).unwrap(),
            1.349_858_807_576_003,
            epsilon = 1e-12
        );
        assert!(hazard_ratio(&[0.3], &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn hazard_ratio_is_time_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let params = random_params(&mut rng, 2);
            let x1: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hr = hazard_ratio(params.beta(), &x1, &x2).unwrap();
            for t in [1.0, 9.0, rng.random_range(0.0..9.9), rng.random_range(0.0..9.9)] {
                let q = params.latency_hazard(t, &x1).unwrap() / params.latency_hazard(t, &x2).unwrap();
                assert_relative_eq!(q, hr, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn incidence_examples() {
        assert_eq!(incidence(&[0.0, 0.0], &[1.0, 5.0]).unwrap(), 0.5);
        assert_abs_diff_eq!(incidence(&[3f64.ln()], &[1.0]).unwrap(), 0.75, epsilon = 1e-15);
        assert!(incidence(&[0.0], &[1.0, 2.0]).is_err());
        let mut last = 0.0;
        for k in -50..50 {
            let p = incidence(&[k as f64 * 0.5], &[1.0]).unwrap();
            assert!(p >= last);
            assert!((PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p));
            last = p;
        }
    }

    #[test]
    fn population_survival_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let params = random_params(&mut rng, 1);
            let x = [1.0, rng.random_range(-1.0..1.0)];
            assert_abs_diff_eq!(params.population_survival(0.0, &x).unwrap(), 1.0, epsilon = 1e-15);
            let pi = params.incidence(&x).unwrap();
            let near = params.population_survival(10.0 * (1.0 - 1e-12), &x).unwrap();
            assert_abs_diff_eq!(near, 1.0 - pi, epsilon = 1e-6);
        }
    }

    #[test]
    fn population_survival_arithmetic() {
        // π = 0.6 and S_c = 0.5 give 0.4 + 0.3
        let b = [(0.6f64 / 0.4).ln()];
        let pi = incidence(&b, &[1.0]).unwrap();
        assert_abs_diff_eq!((1.0 - pi) + pi * 0.5, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = random_params(&mut rng, 1);
        let snap = ModelSnapshot::from_params(&params, &["x".into()]);
        let json = serde_json::to_string(&snap).unwrap();
        let back: ModelSnapshot = serde_json::from_str(&json).unwrap();
        let p2 = back.to_params().unwrap();
        assert_eq!(p2.to_theta(), params.to_theta());
        assert_eq!(
            p2.baseline_survival(3.3).unwrap(),
            params.baseline_survival(3.3).unwrap()
        );
    }
}

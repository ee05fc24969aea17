//! Empirical Bayes selection of the prior precision `λ` on the spline
//! log-weights.
//!
//! Each outer iteration fits the MAP estimate at the current `λ`, takes the
//! negative log-likelihood Hessian `H` at that point, and reduces it to the
//! Schur complement `S` of the `(b, β)` block. With `μ` the eigenvalues of
//! `S`, the stationarity condition of the Laplace evidence in `λ` is
//!
//! `g(λ) = Σ μ_i / (μ_i + λ) - λ ‖α̂‖² = 0`,
//!
//! and the next `λ` is the root with `g' < 0` of largest evidence.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::em::{basis_for, fit_map_with_basis, observed_log_posterior, FitConfig, FitResult};
use crate::error::{CureError, Result};
use crate::laplace::{credible_intervals, log_likelihood_hessian, precision_matrix, CredibleInterval, PrecisionMatrix};
use crate::model::FiniteHorizonParams;
use crate::spline::NormalizedBasis;

const SINGULAR_RIDGE: f64 = 1e-10;

/// Schur complement of the leading `n_theta` block of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct Schur {
    pub s: DMatrix<f64>,
    /// `H_θ̃θ̃` was singular and a ridge of 1e-10 was added before solving.
    pub ridge_applied: bool,
}

/// `S = H_αα - H_αθ̃ H_θ̃θ̃⁻¹ H_θ̃α`, symmetrized.
pub fn schur_complement(h: &DMatrix<f64>, n_theta: usize) -> Result<Schur> {
    let n = h.nrows();
    if !h.is_square() || n_theta == 0 || n_theta >= n {
        return Err(CureError::InvalidInput(format!(
            "cannot split a {}x{} matrix at {n_theta}",
            h.nrows(),
            h.ncols()
        )));
    }
    let n_alpha = n - n_theta;
    let htt = h.view((0, 0), (n_theta, n_theta)).into_owned();
    let hta = h.view((0, n_theta), (n_theta, n_alpha)).into_owned();
    let haa = h.view((n_theta, n_theta), (n_alpha, n_alpha)).into_owned();
    let (solved, ridge_applied) = match htt.clone().lu().solve(&hta) {
        Some(x) if x.iter().all(|v| v.is_finite()) => (x, false),
        _ => {
            let ridged = htt + DMatrix::identity(n_theta, n_theta) * SINGULAR_RIDGE;
            let x = ridged.lu().solve(&hta).ok_or(CureError::NumericalFailure {
                row: 0,
                message: "incidence/latency block singular even after ridge".into(),
            })?;
            (x, true)
        }
    };
    let s = haa - hta.transpose() * solved;
    Ok(Schur {
        s: (&s + s.transpose()) * 0.5,
        ridge_applied,
    })
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    let sym = (s + s.transpose()) * 0.5;
    let mut mu: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    mu.sort_by(f64::total_cmp);
    mu
}

fn lower_bound(mu: &[f64]) -> f64 {
    mu.iter().copied().fold(0.0, |lo, m| lo.max(-m))
}

fn check_domain(lambda: f64, mu: &[f64]) -> Result<()> {
    let lo = lower_bound(mu);
    if !(lambda > lo && lambda.is_finite()) {
        return Err(CureError::domain(lambda, format!("({lo}, inf)")));
    }
    Ok(())
}

/// `g(λ) = Σ μ_i / (μ_i + λ) - λ ‖α̂‖²`.
pub fn g_eval(lambda: f64, mu: &[f64], alpha_norm_sq: f64) -> Result<f64> {
    check_domain(lambda, mu)?;
    Ok(g_raw(lambda, mu, alpha_norm_sq))
}

fn g_raw(lambda: f64, mu: &[f64], a2: f64) -> f64 {
    mu.iter().map(|m| m / (m + lambda)).sum::<f64>() - lambda * a2
}

/// `g'(λ) = -Σ μ_i / (μ_i + λ)² - ‖α̂‖²`.
pub fn g_prime(lambda: f64, mu: &[f64], alpha_norm_sq: f64) -> Result<f64> {
    check_domain(lambda, mu)?;
    Ok(-mu.iter().map(|m| m / ((m + lambda) * (m + lambda))).sum::<f64>() - alpha_norm_sq)
}

/// Laplace evidence as a function of `λ` with `θ̂` and `μ` held fixed, up to
/// a `λ`-free constant: `M_α/2 log λ - λ/2 ‖α̂‖² - ½ Σ log(μ_i + λ)`.
pub fn profile_log_evidence(lambda: f64, mu: &[f64], alpha_norm_sq: f64) -> Result<f64> {
    check_domain(lambda, mu)?;
    Ok(profile_raw(lambda, mu, alpha_norm_sq))
}

fn profile_raw(lambda: f64, mu: &[f64], a2: f64) -> f64 {
    0.5 * mu.len() as f64 * lambda.ln()
        - 0.5 * lambda * a2
        - 0.5 * mu.iter().map(|m| (m + lambda).ln()).sum::<f64>()
}

/// Log-spaced scan points on `(max(0, -μ_min), λ_max]`, as offsets from the
/// lower end of the domain.
pub fn scan_grid(mu: &[f64], lambda_max: f64, points: usize) -> Vec<f64> {
    let lo = lower_bound(mu);
    let first = 1e-8 * lo.max(1.0);
    let last = (lambda_max - lo).max(first * 10.0);
    let (a, b) = (first.ln(), last.ln());
    (0..points)
        .map(|j| lo + (a + (b - a) * j as f64 / (points - 1) as f64).exp())
        .collect()
}

fn bisect(mu: &[f64], a2: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g_raw(lo, mu, a2);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= 1e-15 * hi {
            break;
        }
        let gm = g_raw(mid, mu, a2);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
    }
    let (gl, gh) = (g_raw(lo, mu, a2).abs(), g_raw(hi, mu, a2).abs());
    if gl <= gh {
        lo
    } else {
        hi
    }
}

/// Roots of `g` with `g' < 0` found by scanning [`scan_grid`] for sign
/// changes and bisecting each bracket to machine precision.
pub fn find_lambda_candidates(mu: &[f64], alpha_norm_sq: f64, lambda_max: f64, points: usize) -> Vec<f64> {
    if mu.is_empty() || points < 2 {
        return Vec::new();
    }
    let grid = scan_grid(mu, lambda_max, points);
    let values: Vec<f64> = grid.iter().map(|&l| g_raw(l, mu, alpha_norm_sq)).collect();
    let mut roots = Vec::new();
    for j in 0..grid.len() - 1 {
        let (ga, gb) = (values[j], values[j + 1]);
        let root = if ga == 0.0 {
            Some(grid[j])
        } else if ga.signum() != gb.signum() && gb != 0.0 {
            Some(bisect(mu, alpha_norm_sq, grid[j], grid[j + 1]))
        } else {
            None
        };
        if let Some(r) = root {
            let slope = -mu.iter().map(|m| m / ((m + r) * (m + r))).sum::<f64>() - alpha_norm_sq;
            if slope < 0.0 {
                roots.push(r);
            }
        }
    }
    roots
}

/// Laplace log-marginal likelihood up to a constant shared across `λ`:
/// `log p(D | θ̂) + M_α/2 log λ - λ/2 ‖α̂‖² - ½ log |A|`.
pub fn log_marginal(
    log_likelihood: f64,
    lambda: f64,
    alpha_norm_sq: f64,
    n_alpha: usize,
    a: &PrecisionMatrix,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(CureError::domain(lambda, "(0, inf)"));
    }
    Ok(log_likelihood + 0.5 * n_alpha as f64 * lambda.ln() - 0.5 * lambda * alpha_norm_sq - 0.5 * a.log_det()?)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EbConfig {
    pub initial_lambda: f64,
    /// Stop when consecutive log-marginals differ by less than this.
    pub tol: f64,
    pub max_outer: usize,
    pub lambda_max: f64,
    pub grid_points: usize,
    /// Settings for each inner MAP fit; its `lambda` is overwritten.
    pub fit: FitConfig,
}

impl Default for EbConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 1.0,
            tol: 1e-6,
            max_outer: 50,
            lambda_max: 1e6,
            grid_points: 400,
            fit: FitConfig::default(),
        }
    }
}

/// One outer iteration: the MAP fit at `lambda` and what it implied.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EbIteration {
    pub lambda: f64,
    pub log_marginal: f64,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub candidates: Vec<f64>,
    /// `λ` chosen for the next iteration.
    pub next_lambda: f64,
    /// No admissible root; `next_lambda` is the best scan point.
    pub used_grid_fallback: bool,
    pub ridge_applied: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EbState {
    pub lambda_hat: f64,
    /// Log-marginal of the final refit at `lambda_hat`.
    pub log_marginal: f64,
    /// Schur spectrum from which `lambda_hat` was selected.
    pub mu: Vec<f64>,
    /// `‖α̂‖²` paired with `mu`.
    pub alpha_norm_sq: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Last observed `|Δ log p(D | λ)|`.
    pub last_change: f64,
    pub history: Vec<EbIteration>,
}

struct Evaluated {
    log_marginal: f64,
    mu: Vec<f64>,
    alpha_norm_sq: f64,
    ridge_applied: bool,
}

fn evaluate(fit: &FitResult, data: &Dataset, lambda: f64) -> Result<Evaluated> {
    let params = &fit.params;
    let n_alpha = params.basis().n_basis() - 1;
    let h = log_likelihood_hessian(params, data)?;
    let a = PrecisionMatrix::new(h.clone())?.with_alpha_ridge(lambda, n_alpha)?;
    let alpha_norm_sq: f64 = params.alpha().iter().map(|a| a * a).sum();
    let log_lik = observed_log_posterior(params, data, 0.0)?;
    let log_marginal = log_marginal(log_lik, lambda, alpha_norm_sq, n_alpha, &a)?;
    let schur = schur_complement(&h, h.nrows() - n_alpha)?;
    Ok(Evaluated {
        log_marginal,
        mu: symmetric_eigenvalues(&schur.s),
        alpha_norm_sq,
        ridge_applied: schur.ridge_applied,
    })
}

fn select_lambda(mu: &[f64], a2: f64, cfg: &EbConfig) -> (Vec<f64>, f64, bool) {
    let candidates = find_lambda_candidates(mu, a2, cfg.lambda_max, cfg.grid_points);
    let best = |pts: &[f64]| {
        pts.iter()
            .copied()
            .max_by(|x, y| profile_raw(*x, mu, a2).total_cmp(&profile_raw(*y, mu, a2)))
    };
    match best(&candidates) {
        Some(l) => (candidates, l, false),
        None => {
            let grid = scan_grid(mu, cfg.lambda_max, cfg.grid_points);
            let l = best(&grid).unwrap_or(cfg.initial_lambda);
            (candidates, l, true)
        }
    }
}

/// Runs the outer loop from `config.initial_lambda` and refits at the
/// selected `λ̂`.
pub fn fit_empirical_bayes(data: &Dataset, c: f64, k: usize, config: &EbConfig) -> Result<(FitResult, EbState)> {
    let basis = basis_for(data, c, k)?;
    fit_empirical_bayes_with_basis(data, basis, config)
}

pub fn fit_empirical_bayes_with_basis(
    data: &Dataset,
    basis: Arc<NormalizedBasis>,
    config: &EbConfig,
) -> Result<(FitResult, EbState)> {
    if !(config.initial_lambda > 0.0 && config.initial_lambda.is_finite()) {
        return Err(CureError::InvalidParameter("initial lambda must be positive".into()));
    }
    if !(config.tol > 0.0) || config.max_outer == 0 || config.grid_points < 2 {
        return Err(CureError::InvalidParameter("invalid empirical Bayes settings".into()));
    }
    let mut lambda = config.initial_lambda;
    let mut warm: Option<FiniteHorizonParams> = None;
    let mut history: Vec<EbIteration> = Vec::new();
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for _ in 0..config.max_outer {
        let cfg = FitConfig { lambda, ..config.fit };
        let fit = fit_map_with_basis(data, basis.clone(), &cfg, warm.as_ref())?;
        let ev = evaluate(&fit, data, lambda)?;
        let (candidates, next_lambda, used_grid_fallback) = select_lambda(&ev.mu, ev.alpha_norm_sq, config);
        if let Some(prev) = history.last() {
            last_change = (ev.log_marginal - prev.log_marginal).abs();
        }
        history.push(EbIteration {
            lambda,
            log_marginal: ev.log_marginal,
            theta: fit.params.to_theta(),
            mu: ev.mu,
            candidates,
            next_lambda,
            used_grid_fallback,
            ridge_applied: ev.ridge_applied,
        });
        warm = Some(fit.params);
        if last_change < config.tol {
            converged = true;
            break;
        }
        lambda = next_lambda;
    }

    // on convergence take the λ selected from the last spectrum, otherwise
    // the best evaluated one
    let chosen = if converged {
        history.last().unwrap()
    } else {
        history
            .iter()
            .max_by(|a, b| a.log_marginal.total_cmp(&b.log_marginal))
            .unwrap()
    };
    let lambda_hat = if converged { chosen.next_lambda } else { chosen.lambda };
    let mu = chosen.mu.clone();
    let start = FiniteHorizonParams::from_theta(&chosen.theta, data.n_features(), basis.clone())?;
    let alpha_norm_sq = start.alpha().iter().map(|a| a * a).sum();
    let cfg = FitConfig {
        lambda: lambda_hat,
        ..config.fit
    };
    let fit = fit_map_with_basis(data, basis, &cfg, Some(&start))?;
    let final_ev = evaluate(&fit, data, lambda_hat)?;
    Ok((
        fit,
        EbState {
            lambda_hat,
            log_marginal: final_ev.log_marginal,
            mu,
            alpha_norm_sq,
            outer_iterations: history.len(),
            converged,
            last_change,
            history,
        },
    ))
}

/// How the prior precision is chosen for a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed(f64),
    EmpiricalBayes,
}

/// A MAP fit together with its Laplace intervals.
#[derive(Clone, Debug)]
pub struct InferredFit {
    pub fit: FitResult,
    pub lambda: f64,
    pub eb: Option<EbState>,
    pub precision_min_eigenvalue: f64,
    pub eigen_floor_applied: bool,
    /// One interval per packed coordinate `(b, β, α_1..α_{K-1})`.
    pub intervals: Vec<CredibleInterval>,
}

/// Fits at a fixed or empirical Bayes `λ` and adds credible intervals at
/// `level`. With `force`, a precision matrix that is not positive definite
/// has its eigenvalues floored instead of failing.
pub fn fit_with_intervals(
    data: &Dataset,
    basis: Arc<NormalizedBasis>,
    mode: LambdaMode,
    eb_config: &EbConfig,
    level: f64,
    force: bool,
) -> Result<InferredFit> {
    let (fit, eb) = match mode {
        LambdaMode::Fixed(lambda) => {
            let cfg = FitConfig { lambda, ..eb_config.fit };
            (fit_map_with_basis(data, basis, &cfg, None)?, None)
        }
        LambdaMode::EmpiricalBayes => {
            let (fit, state) = fit_empirical_bayes_with_basis(data, basis, eb_config)?;
            (fit, Some(state))
        }
    };
    let lambda = fit.lambda;
    let mut a = precision_matrix(&fit.params, data, lambda)?;
    let min_eig = a.min_eigenvalue();
    if force && !a.is_positive_definite() {
        let scale = a.matrix().diagonal().amax().max(1.0);
        a = a.with_eigen_floor(1e-8 * scale)?;
    }
    let intervals = credible_intervals(&a, &fit.params.to_theta(), level)?;
    Ok(InferredFit {
        lambda,
        eb,
        precision_min_eigenvalue: min_eig,
        eigen_floor_applied: a.eigen_floor_applied(),
        intervals,
        fit,
    })
}

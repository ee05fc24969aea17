//! Gaussian approximation of the posterior around the MAP point.
//!
//! The precision matrix is the negative Hessian of the observed
//! log-posterior, taken by central differences of the analytic gradient
//! with step `1e-5 (1 + |θ_j|)` and then symmetrized. Parameters are ordered
//! `(b, β, α_1..α_{K-1})`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{CureError, Result};
use crate::likelihood::RowCache;
use crate::model::FiniteHorizonParams;

const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct PrecisionMatrix {
    matrix: DMatrix<f64>,
    min_eigenvalue: f64,
    eigen_floor_applied: bool,
}

impl PrecisionMatrix {
    /// Symmetrizes `matrix` and records its smallest eigenvalue.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(CureError::InvalidInput("precision matrix must be square and non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(CureError::NumericalFailure {
                row: 0,
                message: "non-finite entry in precision matrix".into(),
            });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        Ok(Self {
            matrix: sym,
            min_eigenvalue,
            eigen_floor_applied: false,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue > 0.0 && self.matrix.clone().cholesky().is_some()
    }

    pub fn eigen_floor_applied(&self) -> bool {
        self.eigen_floor_applied
    }

    /// Copy with `lambda` added to the trailing `n_alpha` diagonal entries.
    pub fn with_alpha_ridge(&self, lambda: f64, n_alpha: usize) -> Result<Self> {
        let n = self.dim();
        if n_alpha > n {
            return Err(CureError::InvalidInput("alpha block larger than matrix".into()));
        }
        let mut m = self.matrix.clone();
        for j in n - n_alpha..n {
            m[(j, j)] += lambda;
        }
        Self::new(m)
    }

    /// Copy with every eigenvalue raised to at least `floor`. Used only when
    /// intervals are forced on a matrix that is not positive definite.
    pub fn with_eigen_floor(&self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(CureError::InvalidParameter("eigenvalue floor must be positive".into()));
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        if eig.eigenvalues.min() >= floor {
            return Ok(self.clone());
        }
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        let mut out = Self::new(m)?;
        out.eigen_floor_applied = true;
        Ok(out)
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.matrix
            .clone()
            .cholesky()
            .ok_or(CureError::NotPositiveDefinite {
                min_eigenvalue: self.min_eigenvalue,
            })
    }

    /// `log |A|` from the Cholesky factor.
    pub fn log_det(&self) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(2.0 * l.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    /// Diagonal of `A⁻¹`, one triangular solve per coordinate.
    pub fn marginal_variances(&self) -> Result<Vec<f64>> {
        let l = self.cholesky()?;
        let n = self.dim();
        Ok((0..n)
            .map(|j| {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                l.solve(&e)[j]
            })
            .collect())
    }
}

/// Negative Hessian of a function given only its gradient, by central
/// differences. `grad` writes the gradient of the function being maximized.
pub fn negative_hessian_fd<G>(mut grad: G, theta: &[f64]) -> Result<DMatrix<f64>>
where
    G: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = theta.len();
    let mut h = DMatrix::zeros(n, n);
    let mut x = theta.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..n {
        let step = FD_STEP * (1.0 + theta[j].abs());
        x[j] = theta[j] + step;
        grad(&x, &mut gp)?;
        x[j] = theta[j] - step;
        grad(&x, &mut gm)?;
        x[j] = theta[j];
        let width = (theta[j] + step) - (theta[j] - step);
        for i in 0..n {
            h[(i, j)] = -(gp[i] - gm[i]) / width;
        }
    }
    Ok(h)
}

/// Precision matrix `A` of the Laplace approximation at `params_hat`.
pub fn precision_matrix(
    params_hat: &FiniteHorizonParams,
    data: &Dataset,
    lambda: f64,
) -> Result<PrecisionMatrix> {
    let h = log_likelihood_hessian(params_hat, data)?;
    PrecisionMatrix::new(h)?.with_alpha_ridge(lambda, params_hat.basis().n_basis() - 1)
}

/// `H = -∇² log p(D | θ)` at `params`, symmetrized, without the prior.
pub fn log_likelihood_hessian(params: &FiniteHorizonParams, data: &Dataset) -> Result<DMatrix<f64>> {
    if params.n_features() != data.n_features() {
        return Err(CureError::InvalidInput("parameter and data dimensions differ".into()));
    }
    let cache = RowCache::new(data, params.basis());
    let h = negative_hessian_fd(
        |theta, g| cache.observed(theta, 0.0, Some(g)).map(|_| ()),
        &params.to_theta(),
    )?;
    Ok((&h + h.transpose()) * 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    pub sd: f64,
}

/// Equal-tailed intervals `θ̂_j ± z sqrt((A⁻¹)_jj)`.
pub fn credible_intervals(
    a: &PrecisionMatrix,
    theta_hat: &[f64],
    level: f64,
) -> Result<Vec<CredibleInterval>> {
    if !(0.0..1.0).contains(&level) {
        return Err(CureError::domain(level, "[0, 1)"));
    }
    if theta_hat.len() != a.dim() {
        return Err(CureError::InvalidInput(format!(
            "{} estimates for a {}-dimensional precision matrix",
            theta_hat.len(),
            a.dim()
        )));
    }
    if !(a.min_eigenvalue > 0.0) {
        return Err(CureError::NotPositiveDefinite {
            min_eigenvalue: a.min_eigenvalue,
        });
    }
    let z = if level == 0.0 { 0.0 } else { normal_quantile(0.5 * (1.0 + level)) };
    Ok(a.marginal_variances()?
        .into_iter()
        .zip(theta_hat)
        .map(|(v, &t)| {
            let sd = v.sqrt();
            CredibleInterval {
                estimate: t,
                low: t - z * sd,
                high: t + z * sd,
                sd,
            }
        })
        .collect())
}

/// Standard normal quantile. Returns ±∞ at 0 and 1 and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    Normal::standard().inverse_cdf(p)
}

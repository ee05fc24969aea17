//! Normalized cubic B-spline bases on a finite horizon `[0, c]`.
//!
//! Each raw basis function is converted once into per-interval cubic
//! polynomials. Evaluation, cumulative integrals and tail integrals are then
//! exact polynomial arithmetic, with no quadrature anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

/// Spline degree. Only cubic bases are supported.
pub const DEGREE: usize = 3;

/// Full knot sequence, including the three phantom knots on each side of
/// `[0, c]`.
///
/// Knots at positions `3` and `len - 4` are exactly `0` and `c`; everything
/// between them is an internal knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    horizon: f64,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CureError::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if knots.len() < 2 * (DEGREE + 1) {
            return Err(CureError::InvalidBasisSize(knots.len().saturating_sub(DEGREE + 1)));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(CureError::InvalidParameter("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CureError::InvalidParameter(
                "knots must be strictly increasing".into(),
            ));
        }
        let n = knots.len();
        if knots[DEGREE] != 0.0 || knots[n - DEGREE - 1] != horizon {
            return Err(CureError::InvalidParameter(format!(
                "knots {} and {} must be 0 and the horizon {horizon}",
                DEGREE,
                n - DEGREE - 1
            )));
        }
        Ok(Self { knots, horizon })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of basis functions, `K = len - degree - 1`.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    /// Knots strictly inside `(0, c)`.
    pub fn internal_knots(&self) -> &[f64] {
        &self.knots[DEGREE + 1..self.knots.len() - DEGREE - 1]
    }

    /// Interval breakpoints covering `[0, c]`: `0`, internal knots, `c`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[DEGREE..self.knots.len() - DEGREE]
    }
}

/// Type-7 (linear interpolation) sample quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Builds the knot sequence for `k` basis functions on `[0, c]`.
///
/// Internal knots sit at the type-7 quantiles `j / (k - 3)`, `j = 1..=k-4`, of
/// `event_times`. Coincident quantiles are pushed apart by `1e-9 * c`. Three
/// phantom knots extend each side with spacing `c / (k - 3)`, the mean spacing
/// of the breakpoints inside `[0, c]`.
pub fn build_knots(c: f64, k: usize, event_times: &[f64]) -> Result<KnotVector> {
    if k < DEGREE + 1 {
        return Err(CureError::InvalidBasisSize(k));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(CureError::InvalidParameter(format!(
            "horizon must be positive and finite, got {c}"
        )));
    }
    let n_internal = k - DEGREE - 1;
    let mut internal = Vec::with_capacity(n_internal);
    if n_internal > 0 {
        if event_times.is_empty() {
            return Err(CureError::InsufficientData(
                "event times are required to place internal knots".into(),
            ));
        }
        if let Some(&bad) = event_times
            .iter()
            .find(|t| !t.is_finite() || **t < 0.0 || **t >= c)
        {
            return Err(CureError::domain(bad, format!("[0, {c})")));
        }
        let mut sorted = event_times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let denom = (k - DEGREE) as f64;
        for j in 1..=n_internal {
            internal.push(quantile_sorted(&sorted, j as f64 / denom));
        }
        separate_knots(&mut internal, c);
    }

    let spacing = c / (k - DEGREE) as f64;
    let mut knots = Vec::with_capacity(k + DEGREE + 1);
    for s in (1..=DEGREE).rev() {
        knots.push(-(s as f64) * spacing);
    }
    knots.push(0.0);
    knots.extend_from_slice(&internal);
    knots.push(c);
    for s in 1..=DEGREE {
        knots.push(c + s as f64 * spacing);
    }
    KnotVector::new(knots, c)
}

/// Restores strict ordering inside `(0, c)` with minimal spacing `1e-9 * c`.
fn separate_knots(internal: &mut [f64], c: f64) {
    let eps = 1e-9 * c;
    let mut prev = 0.0;
    for q in internal.iter_mut() {
        if *q < prev + eps {
            *q = prev + eps;
        }
        prev = *q;
    }
    let mut next = c;
    for q in internal.iter_mut().rev() {
        if *q > next - eps {
            *q = next - eps;
        }
        next = *q;
    }
}

type Cubic = [f64; 4];

fn poly_eval(p: &Cubic, u: f64) -> f64 {
    ((p[3] * u + p[2]) * u + p[1]) * u + p[0]
}

/// Antiderivative vanishing at `u = 0`.
fn poly_integral(p: &Cubic, u: f64) -> f64 {
    (((p[3] / 4.0 * u + p[2] / 3.0) * u + p[1] / 2.0) * u + p[0]) * u
}

/// Piecewise-polynomial form of the raw basis on interval `j` (knot span
/// `[t_m, t_{m+1}]`, `m = j + 3`), in the local variable `u = t - t_m`.
/// Entry `l` belongs to basis `j + l`.
fn interval_polynomials(knots: &[f64], j: usize) -> [Cubic; DEGREE + 1] {
    let m = j + DEGREE;
    let tm = knots[m];
    // polys[r] holds B_{m-d+r, d} at the current degree d.
    let mut polys: Vec<Cubic> = vec![[1.0, 0.0, 0.0, 0.0]];
    for d in 1..=DEGREE {
        let mut next = vec![[0.0; 4]; d + 1];
        for (r, out) in next.iter_mut().enumerate() {
            let i = m - d + r;
            // left term: (t - t_i)/(t_{i+d} - t_i) * B_{i,d-1}
            if r >= 1 {
                let prev = &polys[r - 1];
                let denom = knots[i + d] - knots[i];
                let shift = tm - knots[i];
                for deg in 0..4 {
                    out[deg] += shift * prev[deg] / denom;
                    if deg + 1 < 4 {
                        out[deg + 1] += prev[deg] / denom;
                    }
                }
            }
            // right term: (t_{i+d+1} - t)/(t_{i+d+1} - t_{i+1}) * B_{i+1,d-1}
            if r < d {
                let prev = &polys[r];
                let denom = knots[i + d + 1] - knots[i + 1];
                let shift = knots[i + d + 1] - tm;
                for deg in 0..4 {
                    out[deg] += shift * prev[deg] / denom;
                    if deg + 1 < 4 {
                        out[deg + 1] -= prev[deg] / denom;
                    }
                }
            }
        }
        polys = next;
    }
    [polys[0], polys[1], polys[2], polys[3]]
}

/// Normalized cubic B-spline basis: every function integrates to one over
/// `[0, c]`.
#[derive(Clone, Debug)]
pub struct NormalizedBasis {
    knots: KnotVector,
    /// Per interval, normalized cubic pieces of the four active bases.
    pieces: Vec<[Cubic; DEGREE + 1]>,
    /// `tails[i][j] = ∫_{break_j}^{c} B̃_i`, one entry per breakpoint.
    tails: Vec<Vec<f64>>,
    normalizers: Vec<f64>,
}

impl NormalizedBasis {
    pub fn new(knots: KnotVector) -> Self {
        let k = knots.n_basis();
        let n_int = k - DEGREE;
        let kn = knots.knots();
        let breaks = knots.breakpoints().to_vec();
        let raw: Vec<[Cubic; 4]> = (0..n_int).map(|j| interval_polynomials(kn, j)).collect();

        // piece integrals per (basis, interval)
        let mut piece_int = vec![vec![0.0; n_int]; k];
        for (j, polys) in raw.iter().enumerate() {
            let h = breaks[j + 1] - breaks[j];
            for (l, p) in polys.iter().enumerate() {
                piece_int[j + l][j] = poly_integral(p, h);
            }
        }
        let normalizers: Vec<f64> = piece_int.iter().map(|row| row.iter().sum()).collect();

        let pieces = raw
            .iter()
            .enumerate()
            .map(|(j, polys)| {
                let mut out = *polys;
                for (l, p) in out.iter_mut().enumerate() {
                    let z = normalizers[j + l];
                    p.iter_mut().for_each(|a| *a /= z);
                }
                out
            })
            .collect();

        let mut tails = vec![vec![0.0; n_int + 1]; k];
        for i in 0..k {
            let mut acc = 0.0;
            for j in (0..n_int).rev() {
                acc += piece_int[i][j] / normalizers[i];
                tails[i][j] = acc;
            }
        }
        Self {
            knots,
            pieces,
            tails,
            normalizers,
        }
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn horizon(&self) -> f64 {
        self.knots.horizon
    }

    pub fn n_basis(&self) -> usize {
        self.normalizers.len()
    }

    /// Integrals of the raw basis functions over `[0, c]`.
    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let c = self.horizon();
        if !(0.0..=c).contains(&t) {
            return Err(CureError::domain(t, format!("[0, {c}]")));
        }
        let breaks = self.knots.breakpoints();
        let n_int = breaks.len() - 1;
        // first break strictly greater than t, minus one
        let j = breaks.partition_point(|&b| b <= t).saturating_sub(1).min(n_int - 1);
        Ok((j, t - breaks[j]))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_basis() {
            return Err(CureError::InvalidInput(format!(
                "basis index {i} out of range 0..{}",
                self.n_basis()
            )));
        }
        Ok(())
    }

    /// Value of the `i`-th (zero-based) normalized basis function at `t`.
    pub fn eval(&self, i: usize, t: f64) -> Result<f64> {
        self.check_index(i)?;
        let (j, u) = self.locate(t)?;
        if i < j || i > j + DEGREE {
            return Ok(0.0);
        }
        Ok(poly_eval(&self.pieces[j][i - j], u).max(0.0))
    }

    /// Value of the `i`-th raw (unnormalized) basis function at `t`.
    pub fn eval_raw(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.eval(i, t)? * self.normalizers[i])
    }

    /// `∫_t^c B̃_i(u) du`.
    pub fn tail(&self, i: usize, t: f64) -> Result<f64> {
        self.check_index(i)?;
        let (j, u) = self.locate(t)?;
        Ok(self.tail_at(i, j, u))
    }

    fn tail_at(&self, i: usize, j: usize, u: f64) -> f64 {
        let mut v = self.tails[i][j + 1];
        if i >= j && i <= j + DEGREE {
            let p = &self.pieces[j][i - j];
            let h = self.knots.breakpoints()[j + 1] - self.knots.breakpoints()[j];
            v += poly_integral(p, h) - poly_integral(p, u);
        }
        v.clamp(0.0, 1.0)
    }

    /// `∫_0^t B̃_i(u) du`, in `[0, 1]`.
    pub fn cumulative(&self, i: usize, t: f64) -> Result<f64> {
        self.check_index(i)?;
        let (j, u) = self.locate(t)?;
        let mut head = 1.0 - self.tails[i][j];
        if i >= j && i <= j + DEGREE {
            head += poly_integral(&self.pieces[j][i - j], u);
        }
        Ok(head.clamp(0.0, 1.0))
    }

    /// All basis values and tail integrals at `t`, written into `values` and
    /// `tails` (both of length `K`).
    pub fn fill(&self, t: f64, values: &mut [f64], tails: &mut [f64]) -> Result<()> {
        let (j, u) = self.locate(t)?;
        for i in 0..self.n_basis() {
            values[i] = if i >= j && i <= j + DEGREE {
                poly_eval(&self.pieces[j][i - j], u).max(0.0)
            } else {
                0.0
            };
            tails[i] = self.tail_at(i, j, u);
        }
        Ok(())
    }
}

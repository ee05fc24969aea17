//! Limited-memory BFGS minimizer used by every M-step.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsConfig {
    /// Stop once the gradient sup-norm falls to this value.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 500,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    /// Gradient sup-norm reached `grad_tol`.
    pub converged: bool,
    /// The line search could not make progress above rounding level.
    pub stalled: bool,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        sup_norm(&self.grad)
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ARMIJO: f64 = 1e-4;
const WOLFE: f64 = 0.9;
const MAX_BACKTRACK: usize = 50;

/// Minimizes `f`, which returns the objective and writes its gradient into
/// the second argument. Non-finite objective values are treated as
/// infeasible and shrink the step.
///
/// Steps are accepted on the Armijo condition. Close to the optimum, where
/// objective differences sink below rounding error, a step is also accepted
/// when the objective did not rise by more than rounding noise and the
/// directional derivative satisfies the approximate Wolfe conditions.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut stalled = false;

    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            grad: g,
            iterations,
            converged: false,
            stalled: true,
        };
    }

    while sup_norm(&g) > cfg.grad_tol && iterations < cfg.max_iter {
        iterations += 1;
        let mut d = two_loop(&g, &hist);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut step = if hist.is_empty() {
            (1.0 / sup_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let noise = 100.0 * f64::EPSILON * (1.0 + fx.abs());
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() {
                // strict decrease: the Armijo margin alone can round away
                let armijo = f_new < fx && f_new <= fx + ARMIJO * step * slope;
                let slope_new = dot(&g_new, &d);
                let approx_wolfe = f_new <= fx + noise
                    && slope_new >= WOLFE * slope
                    && slope_new <= -0.8 * slope;
                if armijo || approx_wolfe {
                    let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                        if hist.len() == cfg.memory {
                            hist.pop_front();
                        }
                        hist.push_back((s, y, 1.0 / sy));
                    }
                    std::mem::swap(&mut x, &mut x_new);
                    std::mem::swap(&mut g, &mut g_new);
                    fx = f_new;
                    accepted = true;
                    break;
                }
                // safeguarded quadratic interpolation on the step
                let denom = 2.0 * (f_new - fx - step * slope);
                let trial = if denom > 0.0 { -slope * step * step / denom } else { 0.5 * step };
                step = trial.clamp(0.1 * step, 0.5 * step);
            } else {
                step *= 0.25;
            }
        }
        if !accepted {
            if !hist.is_empty() {
                // retry from steepest descent before giving up
                hist.clear();
                continue;
            }
            stalled = true;
            break;
        }
    }

    Minimum {
        converged: sup_norm(&g) <= cfg.grad_tol,
        x,
        value: fx,
        grad: g,
        iterations,
        stalled,
    }
}

fn two_loop(g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= scale);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

//! Unconstrained minimization used by the fitting routine: BFGS with a
//! backtracking line search and analytic gradients, plus a Nelder-Mead
//! fallback for the rare starts where the quasi-Newton iteration stalls.
//!
//! Objectives return `f64::INFINITY` at inadmissible points (the line search
//! treats that as "step too long"), and must have a valid gradient wherever
//! they are finite.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct SolveOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub used_fallback: bool,
}

/// Backtracking Armijo search along `dir` from `x`. Returns the accepted
/// step length and objective value, or None if no decrease was found.
fn line_search<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x: &DVector<f64>,
    fx: f64,
    dir: &DVector<f64>,
    slope: f64,
) -> Option<(f64, f64)> {
    const C1: f64 = 1e-4;
    let mut step = 1.0;
    for _ in 0..60 {
        let trial = x + dir * step;
        let ft = f(&trial);
        if ft.is_finite() && ft <= fx + C1 * step * slope {
            return Some((step, ft));
        }
        step *= 0.5;
    }
    None
}

pub(crate) fn bfgs<F, G>(f: &F, grad: &G, x0: DVector<f64>, opts: &SolveOptions) -> Solution
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Solution {
            x,
            value: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            used_fallback: false,
        };
    }
    let mut g = grad(&x);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let grad_norm = g.amax();
        if grad_norm < opts.grad_tol {
            return Solution {
                x,
                value: fx,
                grad_norm,
                iterations,
                converged: true,
                used_fallback: false,
            };
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            // Stale curvature estimate; restart from steepest descent.
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        let Some((step, ft)) = line_search(f, &x, fx, &dir, slope) else {
            break;
        };
        let s = &dir * step;
        let x_next = &x + &s;
        let g_next = grad(&x_next);
        let y = &g_next - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // Standard inverse-Hessian BFGS update.
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            h_inv += (sy + yhy) * rho * rho * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        let step_norm = s.norm();
        x = x_next;
        fx = ft;
        g = g_next;
        iterations += 1;
        if step_norm < opts.step_tol {
            return Solution {
                x,
                value: fx,
                grad_norm: g.amax(),
                iterations,
                converged: true,
                used_fallback: false,
            };
        }
    }
    Solution {
        grad_norm: g.amax(),
        x,
        value: fx,
        iterations,
        converged: false,
        used_fallback: false,
    }
}

/// Standard Nelder-Mead simplex minimization (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2).
pub(crate) fn nelder_mead<F>(
    f: &F,
    x0: &DVector<f64>,
    initial_scale: f64,
    max_iters: usize,
) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f(x0)));
    for i in 0..n {
        let mut v = x0.clone();
        v[i] += initial_scale;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size: f64 = (1..=n)
            .map(|i| (&simplex[i].0 - &simplex[0].0).norm())
            .fold(0.0, f64::max);
        if (spread.abs() < 1e-14 * (1.0 + simplex[0].1.abs()) && spread.is_finite())
            || size < 1e-12
        {
            break;
        }
        let centroid: DVector<f64> = simplex[..n]
            .iter()
            .fold(DVector::zeros(n), |acc, (v, _)| acc + v)
            / n as f64;
        let worst = simplex[n].clone();
        let reflected = &centroid + (&centroid - &worst.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = &centroid + (&centroid - &worst.0) * 2.0;
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = &centroid + (&worst.0 - &centroid) * 0.5;
            let fc = f(&contracted);
            if fc < worst.1 {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    entry.0 = (&best + &entry.0) * 0.5;
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx)
}

/// BFGS, with one Nelder-Mead rescue and a BFGS polish if the first pass
/// stalls before reaching the gradient tolerance.
pub(crate) fn minimize<F, G>(f: &F, grad: &G, x0: DVector<f64>, opts: &SolveOptions) -> Solution
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let first = bfgs(f, grad, x0, opts);
    if first.converged {
        return first;
    }
    let (x_nm, _) = nelder_mead(f, &first.x, 0.05, 400 * first.x.len());
    let mut polished = bfgs(f, grad, x_nm, opts);
    polished.iterations += first.iterations;
    polished.used_fallback = true;
    if polished.value <= first.value || !first.value.is_finite() {
        polished
    } else {
        Solution {
            used_fallback: true,
            ..first
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &DVector<f64>| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2);
        let g = |x: &DVector<f64>| {
            DVector::from_vec(vec![2.0 * (x[0] - 3.0), 20.0 * (x[1] + 1.0)])
        };
        let opts = SolveOptions {
            grad_tol: 1e-10,
            step_tol: 1e-12,
            max_iters: 200,
        };
        let sol = minimize(&f, &g, DVector::from_vec(vec![0.0, 0.0]), &opts);
        assert!(sol.converged);
        assert!((sol.x[0] - 3.0).abs() < 1e-8);
        assert!((sol.x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_with_infinite_wall() {
        // Classic banana valley, with an inadmissible region the line search
        // must back away from.
        let f = |x: &DVector<f64>| {
            if x[0] > 3.0 {
                return f64::INFINITY;
            }
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let g = |x: &DVector<f64>| {
            DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        };
        let opts = SolveOptions {
            grad_tol: 1e-8,
            step_tol: 1e-14,
            max_iters: 500,
        };
        let sol = minimize(&f, &g, DVector::from_vec(vec![-1.2, 1.0]), &opts);
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.x[1] - 1.0).abs() < 1e-6);
    }
}

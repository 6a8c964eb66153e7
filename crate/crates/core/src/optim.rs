//! Small derivative-free minimisers and finite-difference helpers.
//!
//! Objectives return `f64::INFINITY` outside their feasible region; line
//! searches and simplex moves treat that as a rejected step.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Relative step of the central-difference gradient.
    pub gradient_step: f64,
}

fn step_for(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient; falls back to a one-sided difference when
/// one neighbour is infeasible.
pub fn gradient<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>, fx: f64, rel: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let h = step_for(x[k], rel);
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let down = f(&probe);
        probe[k] = x[k];
        g[k] = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => f64::NAN,
        };
    }
    g
}

/// Central-difference Hessian with per-coordinate steps
/// `rel * max(1, |x_k|)`. Entries are evaluated in parallel.
pub fn hessian<F: Fn(&DVector<f64>) -> f64 + Sync>(f: &F, x: &DVector<f64>, rel: f64) -> DMatrix<f64> {
    let k = x.len();
    let h: Vec<f64> = x.iter().map(|v| step_for(*v, rel)).collect();
    let fx = f(x);
    let eval = |shifts: &[(usize, f64)]| {
        let mut y = x.clone();
        for &(i, s) in shifts {
            y[i] += s;
        }
        f(&y)
    };
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                (eval(&[(i, h[i])]) - 2.0 * fx + eval(&[(i, -h[i])])) / (h[i] * h[i])
            } else {
                (eval(&[(i, h[i]), (j, h[j])]) - eval(&[(i, h[i]), (j, -h[j])]) - eval(&[(i, -h[i]), (j, h[j])])
                    + eval(&[(i, -h[i]), (j, -h[j])]))
                    / (4.0 * h[i] * h[j])
            }
        })
        .collect();
    let mut m = DMatrix::zeros(k, k);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// BFGS on the inverse Hessian with Armijo backtracking.
pub fn bfgs<F: Fn(&DVector<f64>) -> f64>(f: &F, x0: DVector<f64>, s: &Settings) -> Minimum {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    if n == 0 {
        return Minimum { x, value: fx, gradient_norm: 0.0, iterations: 0, converged: true };
    }
    let mut g = gradient(f, &x, fx, s.gradient_step);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    while iterations < s.max_iterations {
        let gnorm = g.amax();
        if gnorm < s.gradient_tolerance {
            return Minimum { x, value: fx, gradient_norm: gnorm, iterations, converged: true };
        }
        if !gnorm.is_finite() {
            break;
        }
        iterations += 1;
        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            h_inv.fill_with_identity();
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut accepted = line_search(f, &x, fx, &d, slope);
        if accepted.is_none() && h_inv != DMatrix::identity(n, n) {
            h_inv.fill_with_identity();
            d = -g.clone();
            slope = g.dot(&d);
            accepted = line_search(f, &x, fx, &d, slope);
        }
        let Some((alpha, f_new)) = accepted else { break };
        let step = &d * alpha;
        let x_new = &x + &step;
        let g_new = gradient(f, &x_new, f_new, s.gradient_step);
        let y = &g_new - &g;
        let sy = step.dot(&y);
        if sy > 1e-12 * step.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H <- H - rho (s y^T H + H y s^T) + (rho^2 y^T H y + rho) s s^T
            h_inv -= (&step * hy.transpose() + &hy * step.transpose()) * rho;
            h_inv += &step * step.transpose() * (rho * rho * yhy + rho);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let gnorm = g.amax();
    Minimum { x, value: fx, gradient_norm: gnorm, iterations, converged: gnorm < s.gradient_tolerance }
}

fn line_search<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>, fx: f64, d: &DVector<f64>, slope: f64) -> Option<(f64, f64)> {
    let mut alpha = 1.0;
    while alpha > 1e-20 {
        let trial = x + d * alpha;
        let ft = f(&trial);
        if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
            return Some((alpha, ft));
        }
        alpha *= 0.5;
    }
    None
}

/// Nelder-Mead with standard coefficients. Convergence is judged by the
/// finite-difference gradient at the best vertex.
pub fn nelder_mead<F: Fn(&DVector<f64>) -> f64>(f: &F, x0: DVector<f64>, s: &Settings) -> Minimum {
    let n = x0.len();
    let fx0 = f(&x0);
    if n == 0 {
        return Minimum { x: x0, value: fx0, gradient_norm: 0.0, iterations: 0, converged: true };
    }
    let mut simplex: Vec<(DVector<f64>, f64)> = vec![(x0.clone(), fx0)];
    for k in 0..n {
        let mut v = x0.clone();
        v[k] += 0.05 * x0[k].abs().max(1.0);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut iterations = 0;
    let budget = s.max_iterations * 20 * (n + 1);
    while iterations < budget {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex.iter().skip(1).map(|(v, _)| (v - &simplex[0].0).amax()).fold(0.0, f64::max);
        if spread.abs() < 1e-15 * (1.0 + simplex[0].1.abs()) && size < 1e-10 {
            break;
        }
        let centroid = simplex[..n].iter().fold(DVector::zeros(n), |acc, (v, _)| acc + v) / n as f64;
        let worst = simplex[n].clone();
        let reflect = &centroid + (&centroid - &worst.0);
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand = &centroid + (&reflect - &centroid) * 2.0;
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract = if fr < worst.1 {
                &centroid + (&reflect - &centroid) * 0.5
            } else {
                &centroid + (&worst.0 - &centroid) * 0.5
            };
            let fc = f(&contract);
            if fc < worst.1.min(fr) {
                simplex[n] = (contract, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    vertex.0 = &best + (&vertex.0 - &best) * 0.5;
                    vertex.1 = f(&vertex.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    let g = gradient(f, &x, value, s.gradient_step);
    let gnorm = g.amax();
    Minimum { x, value, gradient_norm: gnorm, iterations, converged: gnorm < s.gradient_tolerance }
}

//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iterations: 5000,
            grad_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    MaxIterations,
    /// Line search could not decrease the objective any further.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f`, where `f(x, grad)` returns the value and writes the
/// gradient. `on_iter(iteration, value, grad_norm)` is called after every
/// accepted step.
pub fn minimize(
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: Vec<f64>,
    options: LbfgsOptions,
    mut on_iter: impl FnMut(usize, f64, f64),
) -> LbfgsResult {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;

    loop {
        let grad_norm = dot(&g, &g).sqrt();
        if grad_norm < options.grad_tolerance {
            return LbfgsResult {
                x,
                value: fx,
                grad_norm,
                iterations,
                termination: Termination::Gradient,
            };
        }
        if iterations >= options.max_iterations {
            return LbfgsResult {
                x,
                value: fx,
                grad_norm,
                iterations,
                termination: Termination::MaxIterations,
            };
        }

        // Two-loop recursion.
        dir.copy_from_slice(&g);
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            for (d, yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (d, si) in dir.iter_mut().zip(s) {
                *d += (a - b) * si;
            }
        }
        dir.iter_mut().for_each(|d| *d = -*d);

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Not a descent direction: restart from steepest descent.
            history.clear();
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi;
            }
            slope = -grad_norm * grad_norm;
        }
        let mut step = if history.is_empty() {
            (1.0 / grad_norm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            // Near convergence the Armijo decrease drops below rounding
            // level; fall back to the approximate Wolfe test on the slope.
            let armijo = f_new <= fx + 1e-4 * step * slope;
            let approx_wolfe = f_new <= fx + 1e-14 * fx.abs() && {
                let new_slope = dot(&g_new, &dir);
                new_slope >= 0.9 * slope && new_slope <= -0.9998 * slope
            };
            if f_new.is_finite() && (armijo || approx_wolfe) {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    if history.len() == options.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            let grad_norm = dot(&g, &g).sqrt();
            if !history.is_empty() {
                // Retry once from steepest descent before giving up.
                history.clear();
                continue;
            }
            return LbfgsResult {
                x,
                value: fx,
                grad_norm,
                iterations,
                termination: Termination::Stalled,
            };
        }
        on_iter(iterations, fx, dot(&g, &g).sqrt());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = minimize(f, vec![-1.2, 1.0], LbfgsOptions::default(), |_, _, _| {});
        assert_eq!(r.termination, Termination::Gradient);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let scales = [1.0, 1e2, 1e4, 1e6];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..4 {
                g[i] = scales[i] * (x[i] - 1.0);
                v += 0.5 * scales[i] * (x[i] - 1.0).powi(2);
            }
            v
        };
        let r = minimize(f, vec![0.0; 4], LbfgsOptions::default(), |_, _, _| {});
        assert_eq!(r.termination, Termination::Gradient);
        assert!(r.x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }
}

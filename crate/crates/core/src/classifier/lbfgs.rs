//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimises `f` from `x`, in place, until the gradient infinity-norm is at
/// most `tol` or `max_iter` iterations have run.
pub fn minimize<F>(f: F, x: &mut [f64], tol: f64, max_iter: usize) -> Termination
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x.len();
    let (mut fx, mut g) = f(x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;
    let mut trial = vec![0.0; n];

    while iterations < max_iter {
        let gnorm = inf_norm(&g);
        if gnorm <= tol {
            return Termination {
                iterations,
                gradient_norm: gnorm,
                converged: true,
            };
        }
        iterations += 1;

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / dot(&g, &g).sqrt().max(1.0));
        for v in d.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }

        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            for i in 0..n {
                trial[i] = x[i] + step * d[i];
            }
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO * step * slope {
                accepted = Some((ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((ft, gt)) = accepted else {
            // no decrease is representable along d
            return Termination {
                iterations,
                gradient_norm: gnorm,
                converged: false,
            };
        };

        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(t, o)| t - o).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).max(f64::MIN_POSITIVE) {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        x.copy_from_slice(&trial);
        fx = ft;
        g = gt;
    }
    let gnorm = inf_norm(&g);
    Termination {
        iterations,
        gradient_norm: gnorm,
        converged: gnorm <= tol,
    }
}

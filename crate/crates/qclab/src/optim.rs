//! Limited-memory BFGS with Armijo backtracking, for small dense problems.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` starting at `x0`. `fg` writes the gradient into its second
/// argument and returns the value.
pub fn lbfgs<F>(mut fg: F, x0: Vec<f64>, max_iter: usize, gtol: f64) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const MEMORY: usize = 8;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];

    for it in 0..max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= gtol * (1.0 + f.abs()) {
            return LbfgsReport { x, f, iterations: it, converged: true };
        }

        // two-loop recursion
        d.copy_from_slice(&g);
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            for k in 0..n {
                d[k] -= a * y[k];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in d.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for k in 0..n {
                d[k] += s[k] * (a - b);
            }
        }
        for v in d.iter_mut() {
            *v = -*v;
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            hist.clear();
            for k in 0..n {
                d[k] = -g[k];
            }
            slope = -dot(&g, &g);
        }

        let mut step = if hist.is_empty() {
            (1.0 / gmax).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..n {
                x_new[k] = x[k] + step * d[k];
            }
            let f_new = fg(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|k| x_new[k] - x[k]).collect();
                let y: Vec<f64> = (0..n).map(|k| g_new[k] - g[k]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if hist.len() == MEMORY {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                let progress = f - f_new;
                f = f_new;
                accepted = true;
                if progress <= 1e-15 * (1.0 + f.abs()) {
                    return LbfgsReport { x, f, iterations: it + 1, converged: true };
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return LbfgsReport { x, f, iterations: it + 1, converged: false };
        }
    }
    LbfgsReport { x, f, iterations: max_iter, converged: false }
}

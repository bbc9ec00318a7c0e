//! Exhaustive-path oracle for the discrete modulus: every simple path from the
//! first to the last node, then a log-barrier Newton solve of the primal.

use qclab::geodesics::FlowGraph;
use qclab::spaces::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub graph: FlowGraph,
    pub adj: Vec<Vec<(usize, f64)>>,
    pub q: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(5..=12);
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i) as u32, i as u32, rng.gen_range(0.5..2.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.25) {
                edges.push((i as u32, j as u32, rng.gen_range(0.5..2.0)));
            }
        }
    }
    let measure: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let graph = FlowGraph::from_edges(vec![Point3::ORIGIN; n], measure, &edges).unwrap();
    let adj = (0..n).map(|i| graph.neighbors(i as u32).map(|(j, l)| (j as usize, l)).collect()).collect();
    Instance { graph, adj, q: rng.gen_range(1.5..4.0) }
}

/// Trapezoid coefficients of every simple path from `0` to `n − 1`.
pub fn all_paths(inst: &Instance) -> Vec<Vec<f64>> {
    let n = inst.adj.len();
    let mut out = Vec::new();
    let mut on = vec![false; n];
    fn walk(inst: &Instance, v: usize, on: &mut Vec<bool>, coef: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        let n = inst.adj.len();
        if v == n - 1 {
            out.push(coef.clone());
            return;
        }
        on[v] = true;
        for &(w, l) in &inst.adj[v] {
            if !on[w] {
                coef[v] += 0.5 * l;
                coef[w] += 0.5 * l;
                walk(inst, w, on, coef, out);
                coef[v] -= 0.5 * l;
                coef[w] -= 0.5 * l;
            }
        }
        on[v] = false;
    }
    let mut coef = vec![0.0; n];
    walk(inst, 0, &mut on, &mut coef, &mut out);
    out
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|x, y| a[*x][k].abs().total_cmp(&a[*y][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// min Σ m ρ^Q subject to a_p·ρ ≥ 1 and ρ ≥ 0, by a log-barrier path.
pub fn barrier_modulus(m: &[f64], paths: &[Vec<f64>], q: f64) -> f64 {
    let n = m.len();
    let shortest = paths.iter().map(|a| a.iter().sum::<f64>()).fold(f64::INFINITY, f64::min);
    let mut rho = vec![2.0 / shortest; n];
    let phi = |rho: &[f64], t: f64| -> f64 {
        let mut v = t * rho.iter().zip(m).map(|(r, m)| m * r.powf(q)).sum::<f64>();
        for a in paths {
            let s: f64 = a.iter().zip(rho).map(|(a, r)| a * r).sum::<f64>() - 1.0;
            if s <= 0.0 {
                return f64::INFINITY;
            }
            v -= s.ln();
        }
        for r in rho {
            if *r <= 0.0 {
                return f64::INFINITY;
            }
            v -= r.ln();
        }
        v
    };
    let constraints = (paths.len() + n) as f64;
    let mut t = 1.0;
    while constraints / t > 1e-10 {
        for _ in 0..200 {
            let mut grad = vec![0.0; n];
            let mut hess = vec![vec![0.0; n]; n];
            for i in 0..n {
                grad[i] = t * q * m[i] * rho[i].powf(q - 1.0) - 1.0 / rho[i];
                hess[i][i] = t * q * (q - 1.0) * m[i] * rho[i].powf(q - 2.0) + 1.0 / (rho[i] * rho[i]);
            }
            for a in paths {
                let s: f64 = a.iter().zip(&rho).map(|(a, r)| a * r).sum::<f64>() - 1.0;
                for i in 0..n {
                    grad[i] -= a[i] / s;
                    for j in 0..n {
                        hess[i][j] += a[i] * a[j] / (s * s);
                    }
                }
            }
            let step = solve_dense(hess, grad.iter().map(|g| -g).collect());
            let decrement: f64 = -step.iter().zip(&grad).map(|(s, g)| s * g).sum::<f64>();
            if decrement < 1e-14 {
                break;
            }
            let f0 = phi(&rho, t);
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = rho.iter().zip(&step).map(|(r, s)| r + alpha * s).collect();
                if phi(&trial, t) <= f0 - 0.25 * alpha * decrement {
                    rho = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
        }
        t *= 8.0;
    }
    rho.iter().zip(m).map(|(r, m)| m * r.powf(q)).sum()
}

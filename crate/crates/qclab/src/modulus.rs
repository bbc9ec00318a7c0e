//! Discrete Q-modulus of the family of paths joining two node sets.
//!
//! Densities live on nodes; a path's integral is the trapezoid sum
//! `Σ (ρ_i + ρ_j)/2 · ℓ_ij`, so each path is a linear functional `a_p · ρ`.
//! `q_modulus` runs constraint generation: an inner solve over the active
//! paths gives a certified lower bound (any dual point of a relaxation is
//! one), and the ρ-shortest path over the whole graph rescales the inner
//! density into an admissible one, giving the upper bound.

use crate::error::{Error, Result};
use crate::geodesics::{build_graph, dijkstra, FlowGraph, GraphSpec};
use crate::optim::lbfgs;
use crate::spaces::{Point3, SpaceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub values: Vec<f64>,
}

impl Density {
    pub fn zeros(n: usize) -> Self {
        Density { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Density { values: vec![c; n] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Density { values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// Paths of `graph` joining `e` to `f`.
#[derive(Debug, Clone)]
pub struct CurveFamily<'a> {
    pub graph: &'a FlowGraph,
    pub e: Vec<u32>,
    pub f: Vec<u32>,
}

fn is_connected_set(g: &FlowGraph, set: &[u32]) -> bool {
    if set.len() <= 1 {
        return true;
    }
    let members: HashSet<u32> = set.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut stack = vec![set[0]];
    seen.insert(set[0]);
    while let Some(a) = stack.pop() {
        for (b, _) in g.neighbors(a) {
            if members.contains(&b) && seen.insert(b) {
                stack.push(b);
            }
        }
    }
    seen.len() == members.len()
}

impl<'a> CurveFamily<'a> {
    pub fn new(graph: &'a FlowGraph, mut e: Vec<u32>, mut f: Vec<u32>) -> Result<Self> {
        e.sort_unstable();
        e.dedup();
        f.sort_unstable();
        f.dedup();
        if e.is_empty() || f.is_empty() {
            return Err(Error::invalid("family", format!("|E|={}, |F|={}", e.len(), f.len()), "E and F must be nonempty"));
        }
        let n = graph.node_count() as u32;
        if e.iter().chain(&f).any(|&v| v >= n) {
            return Err(Error::invalid("family", "node id", "node ids must be in range"));
        }
        let fs: HashSet<u32> = f.iter().copied().collect();
        if e.iter().any(|v| fs.contains(v)) {
            return Err(Error::invalid("family", "E ∩ F", "E and F must be disjoint"));
        }
        if !is_connected_set(graph, &e) || !is_connected_set(graph, &f) {
            return Err(Error::invalid("family", "E, F", "each set must be connected in the graph"));
        }
        Ok(CurveFamily { graph, e, f })
    }

    /// A family that skips the connectivity requirement on E and F.
    pub fn new_unchecked_connectivity(graph: &'a FlowGraph, mut e: Vec<u32>, mut f: Vec<u32>) -> Result<Self> {
        e.sort_unstable();
        e.dedup();
        f.sort_unstable();
        f.dedup();
        if e.is_empty() || f.is_empty() || e.iter().any(|v| f.binary_search(v).is_ok()) {
            return Err(Error::invalid("family", "E, F", "E and F must be nonempty and disjoint"));
        }
        Ok(CurveFamily { graph, e, f })
    }
}

pub fn path_integral(g: &FlowGraph, rho: &Density, path: &[u32]) -> Result<f64> {
    let mut s = 0.0;
    for w in path.windows(2) {
        let l = g.edge_length(w[0], w[1]).ok_or(Error::NotAdjacent(w[0], w[1]))?;
        s += 0.5 * (rho.values[w[0] as usize] + rho.values[w[1] as usize]) * l;
    }
    Ok(s)
}

pub fn path_length(g: &FlowGraph, path: &[u32]) -> Result<f64> {
    let mut s = 0.0;
    for w in path.windows(2) {
        s += g.edge_length(w[0], w[1]).ok_or(Error::NotAdjacent(w[0], w[1]))?;
    }
    Ok(s)
}

pub fn energy(g: &FlowGraph, rho: &Density, q: f64) -> f64 {
    g.node_measure
        .iter()
        .zip(&rho.values)
        .filter(|(_, r)| **r > 0.0)
        .map(|(m, r)| m * r.powf(q))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LexItem(f64, f64, u32);

impl Eq for LexItem {}

impl Ord for LexItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0)
            .then_with(|| o.1.total_cmp(&self.1))
            .then_with(|| o.2.cmp(&self.2))
    }
}

impl PartialOrd for LexItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// ρ-shortest paths from `E` with geometric length as tie-break; nodes of `F`
/// are terminal so every extracted path meets `F` only at its end.
pub struct RhoField {
    pub cost: Vec<f64>,
    pub length: Vec<f64>,
    pred: Vec<u32>,
}

impl RhoField {
    pub fn path_to(&self, t: u32) -> Vec<u32> {
        if !self.cost[t as usize].is_finite() {
            return Vec::new();
        }
        let mut p = vec![t];
        let mut c = t;
        while self.pred[c as usize] != NONE {
            c = self.pred[c as usize];
            p.push(c);
        }
        p.reverse();
        p
    }
}

pub fn rho_shortest(g: &FlowGraph, rho: &[f64], e: &[u32], f_mask: &[bool], weight: impl Fn(u32, u32) -> f64) -> RhoField {
    let n = g.node_count();
    let mut cost = vec![f64::INFINITY; n];
    let mut length = vec![f64::INFINITY; n];
    let mut pred = vec![NONE; n];
    let mut heap = BinaryHeap::new();
    for &s in e {
        cost[s as usize] = 0.0;
        length[s as usize] = 0.0;
        heap.push(LexItem(0.0, 0.0, s));
    }
    while let Some(LexItem(c, l, a)) = heap.pop() {
        let ai = a as usize;
        if c > cost[ai] || (c == cost[ai] && l > length[ai]) {
            continue;
        }
        if f_mask[ai] {
            continue;
        }
        for (b, el) in g.neighbors(a) {
            let bi = b as usize;
            let nc = c + 0.5 * (rho[ai] + rho[bi]) * el * weight(a, b);
            let nl = l + el;
            if nc < cost[bi] || (nc == cost[bi] && nl < length[bi]) {
                cost[bi] = nc;
                length[bi] = nl;
                pred[bi] = a;
                heap.push(LexItem(nc, nl, b));
            }
        }
    }
    RhoField { cost, length, pred }
}

fn f_mask(n: usize, f: &[u32]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &v in f {
        m[v as usize] = true;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// Minimum path integral found; exact for the discrete family since the
    /// ρ-shortest path is among the candidates.
    pub min_integral: f64,
    pub witness: Vec<u32>,
    pub shortest_integral: f64,
    pub sampled_min: f64,
    pub samples: usize,
    pub note: Option<String>,
}

/// Minimum of the path integral over the ρ-shortest E–F path and `samples`
/// randomized E–F paths (random endpoints, randomly perturbed edge weights).
pub fn admissibility_check(fam: &CurveFamily, rho: &Density, samples: usize, seed: u64) -> Result<AdmissibilityReport> {
    let g = fam.graph;
    let n = g.node_count();
    let mask = f_mask(n, &fam.f);
    let field = rho_shortest(g, &rho.values, &fam.e, &mask, |_, _| 1.0);
    let best = fam
        .f
        .iter()
        .copied()
        .min_by(|a, b| field.cost[*a as usize].total_cmp(&field.cost[*b as usize]).then(a.cmp(b)))
        .unwrap();
    let shortest = field.cost[best as usize];
    if !shortest.is_finite() {
        return Ok(AdmissibilityReport {
            min_integral: f64::INFINITY,
            witness: Vec::new(),
            shortest_integral: f64::INFINITY,
            sampled_min: f64::INFINITY,
            samples: 0,
            note: Some("E and F are disconnected; the family is empty".into()),
        });
    }
    let witness = field.path_to(best);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_min = f64::INFINITY;
    let mut sampled_witness = Vec::new();
    for _ in 0..samples {
        let e = fam.e[rng.gen_range(0..fam.e.len())];
        let f = fam.f[rng.gen_range(0..fam.f.len())];
        let salt: u64 = rng.gen();
        // deterministic per-edge perturbation in [1, 2)
        let perturb = |a: u32, b: u32| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let mut x = (lo as u64) << 32 ^ hi as u64 ^ salt;
            x ^= x >> 33;
            x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
            x ^= x >> 33;
            1.0 + (x >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut single = vec![false; n];
        single[f as usize] = true;
        let rf = rho_shortest(g, &rho.values, &[e], &single, perturb);
        let path = rf.path_to(f);
        if path.is_empty() {
            continue;
        }
        let v = path_integral(g, rho, &path)?;
        if v < sampled_min {
            sampled_min = v;
            sampled_witness = path;
        }
    }
    let (min_integral, witness) = if sampled_min < shortest {
        (sampled_min, sampled_witness)
    } else {
        (shortest, witness)
    };
    Ok(AdmissibilityReport {
        min_integral,
        witness,
        shortest_integral: shortest,
        sampled_min,
        samples,
        note: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Projected gradient ascent on the dual with Barzilai–Borwein steps.
    SpectralProjected,
    /// Projected subgradient with steps `c/√k` and iterate averaging.
    AveragedSubgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusOptions {
    /// Stop once the ρ-shortest path integral reaches `1 − tol`.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// New paths added per outer round.
    pub paths_per_round: usize,
    pub solver: InnerSolver,
    /// Inner stop: relative gap between restricted primal and dual.
    pub inner_gap: f64,
    /// Relative gap required for `converged`.
    pub gap_target: f64,
    /// Augmented-Lagrangian rounds of the potential phase; 0 skips it.
    pub potential_rounds: usize,
    /// L-BFGS iterations per potential round.
    pub potential_iters: usize,
    /// Path generation is skipped on graphs with more nodes than this; there
    /// the potential phase alone is far cheaper.
    pub path_phase_max_nodes: usize,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        ModulusOptions {
            tol: 0.02,
            max_outer: 200,
            max_inner: 2000,
            paths_per_round: 64,
            solver: InnerSolver::SpectralProjected,
            inner_gap: 2e-3,
            gap_target: 0.10,
            potential_rounds: 30,
            potential_iters: 200,
            path_phase_max_nodes: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusResult {
    pub upper: f64,
    pub lower: f64,
    /// Admissible density whose energy is `upper`.
    #[serde(skip)]
    pub density: Density,
    pub active_paths: usize,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub relative_gap: f64,
    pub converged: bool,
    /// Last ρ-shortest integral before rescaling.
    pub min_integral: f64,
}

impl ModulusResult {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }
}

/// Active constraint set and dual weights, reusable across nested families on
/// the same graph.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub paths: Vec<Vec<u32>>,
    pub lambda: Vec<f64>,
}

struct Dual {
    q: f64,
    /// global node id of each local index
    nodes: Vec<u32>,
    local_of: Vec<u32>,
    measure: Vec<f64>,
    rows: Vec<Vec<(u32, f64)>>,
    keys: HashSet<Vec<u32>>,
    paths: Vec<Vec<u32>>,
}

impl Dual {
    fn new(g: &FlowGraph, q: f64) -> Self {
        Dual {
            q,
            nodes: Vec::new(),
            local_of: vec![NONE; g.node_count()],
            measure: Vec::new(),
            rows: Vec::new(),
            keys: HashSet::new(),
            paths: Vec::new(),
        }
    }

    fn add_path(&mut self, g: &FlowGraph, path: &[u32]) -> Result<bool> {
        if path.len() < 2 || self.keys.contains(path) {
            return Ok(false);
        }
        let mut coef: Vec<(u32, f64)> = Vec::with_capacity(path.len());
        for w in path.windows(2) {
            let l = g.edge_length(w[0], w[1]).ok_or(Error::NotAdjacent(w[0], w[1]))?;
            for v in [w[0], w[1]] {
                let vi = v as usize;
                if self.local_of[vi] == NONE {
                    if !(g.node_measure[vi] > 0.0) {
                        return Err(Error::invalid("node_measure", g.node_measure[vi], "path nodes need positive measure"));
                    }
                    self.local_of[vi] = self.nodes.len() as u32;
                    self.nodes.push(v);
                    self.measure.push(g.node_measure[vi]);
                }
                coef.push((self.local_of[vi], 0.5 * l));
            }
        }
        coef.sort_by_key(|c| c.0);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(coef.len());
        for (i, c) in coef {
            match row.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => row.push((i, c)),
            }
        }
        self.rows.push(row);
        self.keys.insert(path.to_vec());
        self.paths.push(path.to_vec());
        Ok(true)
    }

    /// ρ(λ) on local nodes and the dual value.
    fn evaluate(&self, lambda: &[f64], rho: &mut Vec<f64>) -> f64 {
        let m = self.nodes.len();
        let mut gsum = vec![0.0; m];
        for (row, &l) in self.rows.iter().zip(lambda) {
            if l != 0.0 {
                for &(i, a) in row {
                    gsum[i as usize] += l * a;
                }
            }
        }
        rho.clear();
        rho.resize(m, 0.0);
        let inv = 1.0 / (self.q - 1.0);
        let mut s = 0.0;
        for i in 0..m {
            let g = gsum[i];
            if g > 0.0 {
                let base = g / (self.q * self.measure[i]);
                let r = if (self.q - 2.0).abs() < 1e-15 {
                    base
                } else if (self.q - 4.0).abs() < 1e-15 {
                    base.cbrt()
                } else {
                    base.powf(inv)
                };
                rho[i] = r;
                s += g * r;
            }
        }
        lambda.iter().sum::<f64>() - (1.0 - 1.0 / self.q) * s
    }

    fn integrals(&self, rho: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.rows.iter().map(|row| row.iter().map(|&(i, a)| a * rho[i as usize]).sum::<f64>()));
    }

    fn restricted_energy(&self, rho: &[f64]) -> f64 {
        rho.iter().zip(&self.measure).map(|(r, m)| m * r.powf(self.q)).sum()
    }

    /// Maximizes the dual from `lambda`; returns (best dual value, iterations).
    fn solve(&self, lambda: &mut Vec<f64>, opts: &ModulusOptions) -> (f64, usize) {
        match opts.solver {
            InnerSolver::SpectralProjected => self.solve_spg(lambda, opts),
            InnerSolver::AveragedSubgradient => self.solve_subgradient(lambda, opts),
        }
    }

    fn gap_ok(&self, d: f64, rho: &[f64], ints: &[f64], gap: f64) -> bool {
        let smin = ints.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smin > 0.0) {
            return false;
        }
        let upper = self.restricted_energy(rho) / smin.powf(self.q);
        upper - d <= gap * upper
    }

    /// Per-path diagonal of the negated dual Hessian, with node loads floored
    /// at a tenth of the mean positive load so fresh paths get a finite scale.
    fn hessian_diag(&self, lambda: &[f64], out: &mut Vec<f64>) {
        let m = self.nodes.len();
        let mut gsum = vec![0.0; m];
        for (row, &l) in self.rows.iter().zip(lambda) {
            if l != 0.0 {
                for &(i, a) in row {
                    gsum[i as usize] += l * a;
                }
            }
        }
        let (tot, cnt) = gsum.iter().filter(|g| **g > 0.0).fold((0.0, 0usize), |(s, c), g| (s + g, c + 1));
        let floor = if cnt > 0 { 0.1 * tot / cnt as f64 } else { 1.0 };
        let inv = 1.0 / (self.q - 1.0);
        let curv: Vec<f64> = (0..m)
            .map(|i| {
                let g = gsum[i].max(floor);
                (g / (self.q * self.measure[i])).powf(inv) * inv / g
            })
            .collect();
        out.clear();
        out.extend(self.rows.iter().map(|row| row.iter().map(|&(i, a)| a * a * curv[i as usize]).sum::<f64>().max(1e-300)));
    }

    fn solve_spg(&self, lambda: &mut Vec<f64>, opts: &ModulusOptions) -> (f64, usize) {
        let np = self.rows.len();
        let mut rho = Vec::new();
        let mut ints = Vec::new();
        let mut d = self.evaluate(lambda, &mut rho);
        self.integrals(&rho, &mut ints);
        let mut grad: Vec<f64> = ints.iter().map(|s| 1.0 - s).collect();
        let mut hd = Vec::new();
        let mut alpha = 1.0;
        let mut trial = vec![0.0; np];
        let mut trial_rho = Vec::new();
        let mut iters = 0;
        for it in 0..opts.max_inner {
            iters = it + 1;
            if self.gap_ok(d, &rho, &ints, opts.inner_gap) {
                break;
            }
            if it % 10 == 0 {
                self.hessian_diag(lambda, &mut hd);
            }
            // scaled projected step, backtracking on sufficient increase
            let mut accepted = false;
            let mut d_new = d;
            for _ in 0..40 {
                for p in 0..np {
                    trial[p] = (lambda[p] + alpha * grad[p] / hd[p]).max(0.0);
                }
                let dir: f64 = (0..np).map(|p| grad[p] * (trial[p] - lambda[p])).sum();
                if dir <= 0.0 {
                    break;
                }
                d_new = self.evaluate(&trial, &mut trial_rho);
                if d_new >= d + 1e-4 * dir {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            let mut new_ints = Vec::new();
            self.integrals(&trial_rho, &mut new_ints);
            let new_grad: Vec<f64> = new_ints.iter().map(|s| 1.0 - s).collect();
            let mut shs = 0.0;
            let mut sy = 0.0;
            for p in 0..np {
                let s = trial[p] - lambda[p];
                shs += s * s * hd[p];
                sy += s * (new_grad[p] - grad[p]);
            }
            // Barzilai–Borwein in the scaled metric; sᵀy ≤ 0 for a concave dual
            alpha = if sy < 0.0 { (shs / -sy).clamp(1e-8, 1e4) } else { (alpha * 2.0).min(1e4) };
            std::mem::swap(lambda, &mut trial);
            std::mem::swap(&mut rho, &mut trial_rho);
            ints = new_ints;
            grad = new_grad;
            d = d_new;
        }
        (d, iters)
    }

    fn solve_subgradient(&self, lambda: &mut Vec<f64>, opts: &ModulusOptions) -> (f64, usize) {
        let np = self.rows.len();
        let mut rho = Vec::new();
        let mut ints = Vec::new();
        let mut avg = lambda.clone();
        let mut best = self.evaluate(lambda, &mut rho);
        let scale = lambda.iter().sum::<f64>().max(1.0 / np as f64);
        let c = scale;
        let mut iters = 0;
        for k in 1..=opts.max_inner {
            iters = k;
            self.evaluate(lambda, &mut rho);
            self.integrals(&rho, &mut ints);
            let gn = ints.iter().map(|s| (1.0 - s).powi(2)).sum::<f64>().sqrt();
            if gn == 0.0 {
                break;
            }
            let step = c / (k as f64).sqrt() / gn;
            for p in 0..np {
                lambda[p] = (lambda[p] + step * (1.0 - ints[p])).max(0.0);
                avg[p] += (lambda[p] - avg[p]) / (k as f64 + 1.0);
            }
            if k % 10 == 0 {
                let d_avg = self.evaluate(&avg, &mut rho);
                best = best.max(d_avg);
                self.integrals(&rho, &mut ints);
                if self.gap_ok(d_avg, &rho, &ints, opts.inner_gap) {
                    lambda.copy_from_slice(&avg);
                    return (best, iters);
                }
            }
        }
        let d_avg = self.evaluate(&avg, &mut rho);
        if d_avg >= best {
            lambda.copy_from_slice(&avg);
        }
        (best.max(d_avg), iters)
    }

    fn retain(&mut self, keep: &[bool]) {
        let mut k = 0;
        self.rows.retain(|_| { k += 1; keep[k - 1] });
        let mut k = 0;
        let mut dropped = Vec::new();
        self.paths.retain(|p| {
            k += 1;
            if !keep[k - 1] {
                dropped.push(p.clone());
            }
            keep[k - 1]
        });
        for p in dropped {
            self.keys.remove(&p);
        }
    }

    fn snapshot(&self, lambda: &[f64]) -> WarmStart {
        let mut w = WarmStart::default();
        for (p, l) in self.paths.iter().zip(lambda) {
            if *l > 0.0 {
                w.paths.push(p.clone());
                w.lambda.push(*l);
            }
        }
        w
    }

    fn global_density(&self, lambda: &[f64], n: usize) -> Vec<f64> {
        let mut rho = Vec::new();
        self.evaluate(lambda, &mut rho);
        let mut out = vec![0.0; n];
        for (i, &v) in self.nodes.iter().enumerate() {
            out[v as usize] = rho[i];
        }
        out
    }
}

pub fn q_modulus(fam: &CurveFamily, q: f64, opts: &ModulusOptions) -> Result<ModulusResult> {
    Ok(q_modulus_warm(fam, q, opts, None)?.0)
}

/// Constraint generation; `warm` carries paths and dual weights from a
/// previous solve on the same graph. For a family containing the previous one
/// the lower bound cannot decrease.
pub fn q_modulus_warm(
    fam: &CurveFamily,
    q: f64,
    opts: &ModulusOptions,
    warm: Option<&WarmStart>,
) -> Result<(ModulusResult, WarmStart)> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::invalid("Q", q, "Q > 1 required"));
    }
    if !(opts.tol > 0.0 && opts.tol < 0.5) {
        return Err(Error::invalid("tol", opts.tol, "tol must lie in (0, 0.5)"));
    }
    let g = fam.graph;
    let n = g.node_count();
    let mask = f_mask(n, &fam.f);
    let mut dual = Dual::new(g, q);
    let mut lambda: Vec<f64> = Vec::new();

    if let Some(w) = warm {
        for (p, l) in w.paths.iter().zip(&w.lambda) {
            if dual.add_path(g, p)? {
                lambda.push(*l);
            }
        }
    }
    if dual.rows.is_empty() {
        let field = rho_shortest(g, &vec![0.0; n], &fam.e, &mask, |_, _| 1.0);
        let best = fam
            .f
            .iter()
            .copied()
            .filter(|v| field.cost[*v as usize].is_finite())
            .min_by(|a, b| field.length[*a as usize].total_cmp(&field.length[*b as usize]).then(a.cmp(b)));
        let Some(t) = best else {
            // no E–F path: the family is empty and its modulus is 0
            return Ok((
                ModulusResult {
                    upper: 0.0,
                    lower: 0.0,
                    density: Density::zeros(n),
                    active_paths: 0,
                    iterations: 0,
                    inner_iterations: 0,
                    relative_gap: 0.0,
                    converged: true,
                    min_integral: f64::INFINITY,
                },
                WarmStart::default(),
            ));
        };
        dual.add_path(g, &field.path_to(t))?;
        lambda.push(0.0);
    }

    let mut lower: f64 = 0.0;
    let mut upper = f64::INFINITY;
    let mut best_density = Density::zeros(n);
    let mut min_integral = 0.0;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;
    if opts.potential_rounds > 0 {
        let pb = potential_bounds(fam, q, opts);
        inner_total += pb.iterations;
        lower = pb.lower;
        if pb.upper.is_finite() {
            upper = pb.upper;
            min_integral = pb.min_integral;
            best_density = Density { values: pb.density };
        }
        if upper.is_finite() && (upper - lower) <= opts.gap_target * upper {
            // when the bounds meet they can cross by an ulp
            let lower = lower.min(upper);
            let relative_gap = (upper - lower) / upper;
            return Ok((
                ModulusResult {
                    upper,
                    lower,
                    density: best_density,
                    active_paths: 0,
                    iterations: 0,
                    inner_iterations: inner_total,
                    relative_gap,
                    converged: true,
                    min_integral,
                },
                WarmStart::default(),
            ));
        }
    }
    let mut warm_out = WarmStart::default();
    let mut idle: Vec<u8> = vec![0; lambda.len()];
    let mut gap = 1.0;
    let mut inner = opts.clone();

    let max_outer = if n <= opts.path_phase_max_nodes { opts.max_outer } else { 0 };
    while outer < max_outer {
        outer += 1;
        inner.inner_gap = opts.inner_gap.max(0.1 * gap);
        let (d, it) = dual.solve(&mut lambda, &inner);
        inner_total += it;
        if d > lower {
            lower = d;
            warm_out = dual.snapshot(&lambda);
        }
        let rho = dual.global_density(&lambda, n);
        let field = rho_shortest(g, &rho, &fam.e, &mask, |_, _| 1.0);
        let reach = sorted_targets(&field, &fam.f);
        let m = reach.first().map(|v| field.cost[*v as usize]).unwrap_or(f64::INFINITY);
        min_integral = m;
        // the raw dual density vanishes off the active paths; a smoothed copy
        // is usually a much better admissible candidate
        let smooth = smoothed(g, &rho);
        let ms = rho_shortest(g, &smooth, &fam.e, &mask, |_, _| 1.0);
        let m_s = fam.f.iter().map(|v| ms.cost[*v as usize]).fold(f64::INFINITY, f64::min);
        for (cand, mc) in [(&rho, m), (&smooth, m_s)] {
            if mc > 0.0 && mc.is_finite() {
                let e = energy(g, &Density { values: cand.clone() }, q) / mc.powf(q);
                if e < upper {
                    upper = e;
                    best_density = Density { values: cand.iter().map(|v| v / mc).collect() };
                }
            }
        }
        gap = if upper > 0.0 && upper.is_finite() { (upper - lower) / upper } else { 1.0 };
        if gap <= opts.gap_target && (m >= 1.0 - opts.tol || gap <= 0.5 * opts.gap_target) {
            converged = true;
            break;
        }

        for (k, l) in lambda.iter().enumerate() {
            idle[k] = if *l > 0.0 { 0 } else { idle[k].saturating_add(1) };
        }
        let keep: Vec<bool> = idle.iter().map(|z| *z < 3).collect();
        if keep.iter().any(|k| !k) {
            dual.retain(&keep);
            let mut k = 0;
            lambda.retain(|_| { k += 1; keep[k - 1] });
            idle.retain(|z| *z < 3);
        }

        let back = rho_shortest(g, &rho, &fam.f, &f_mask(n, &fam.e), |_, _| 1.0);
        let added = add_through_paths(&mut dual, g, &field, &back, 1.0 - opts.tol, opts.paths_per_round)?;
        lambda.resize(dual.rows.len(), 0.0);
        idle.resize(dual.rows.len(), 0);
        if added == 0 {
            // every violated path is already active: the inner solve is the limit
            converged = gap <= opts.gap_target;
            break;
        }
    }
    if !converged && upper.is_finite() {
        converged = gap <= opts.gap_target;
    }
    let lower = lower.min(upper);
    let relative_gap = if upper > 0.0 && upper.is_finite() { (upper - lower) / upper } else { f64::INFINITY };
    Ok((
        ModulusResult {
            upper,
            lower,
            density: best_density,
            active_paths: dual.rows.len(),
            iterations: outer,
            inner_iterations: inner_total,
            relative_gap,
            converged,
            min_integral,
        },
        warm_out,
    ))
}

/// Adds up to `budget` violated E–F walks `E → v → F` through distinct nodes
/// `v`, most violated first, skipping nodes already used this round. Returns
/// the number added.
fn add_through_paths(dual: &mut Dual, g: &FlowGraph, fwd: &RhoField, back: &RhoField, bound: f64, budget: usize) -> Result<usize> {
    let n = g.node_count();
    let mut cand: Vec<(f64, f64, u32)> = (0..n)
        .filter_map(|v| {
            let c = fwd.cost[v] + back.cost[v];
            (c < bound).then(|| (c, fwd.length[v] + back.length[v], v as u32))
        })
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; n];
    let mut added = 0;
    for (_, _, v) in cand {
        if added >= budget {
            break;
        }
        if used[v as usize] {
            continue;
        }
        let mut path = fwd.path_to(v);
        let mut tail = back.path_to(v);
        tail.reverse();
        path.extend_from_slice(&tail[1..]);
        for &u in &path {
            used[u as usize] = true;
        }
        if dual.add_path(g, &path)? {
            added += 1;
        }
    }
    Ok(added)
}

struct PotentialBounds {
    upper: f64,
    density: Vec<f64>,
    min_integral: f64,
    lower: f64,
    iterations: usize,
}

/// Flat copy of the adjacency with inverse edge lengths.
struct Adjacency {
    off: Vec<usize>,
    nbr: Vec<u32>,
    inv_len: Vec<f64>,
    /// index of the opposite directed edge
    rev: Vec<usize>,
}

impl Adjacency {
    fn new(g: &FlowGraph) -> Self {
        let n = g.node_count();
        let mut off = Vec::with_capacity(n + 1);
        let mut nbr = Vec::new();
        let mut inv_len = Vec::new();
        off.push(0);
        let mut row: Vec<(u32, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend(g.neighbors(i as u32));
            row.sort_by_key(|r| r.0);
            for &(j, l) in &row {
                nbr.push(j);
                inv_len.push(1.0 / l);
            }
            off.push(nbr.len());
        }
        let mut rev = vec![0; nbr.len()];
        for i in 0..n {
            for e in off[i]..off[i + 1] {
                let j = nbr[e] as usize;
                let k = nbr[off[j]..off[j + 1]].binary_search(&(i as u32)).expect("graph adjacency is symmetric");
                rev[e] = off[j] + k;
            }
        }
        Adjacency { off, nbr, inv_len, rev }
    }
}

/// Potential phase: the discrete problem in potential form,
///
///   minimize Σ m_i ρ_i^Q  subject to  ρ_i + ρ_j ≥ 2(u_j − u_i)/ℓ_ij  on every
///   directed edge,  u = 0 on E,  u = 1 on F,
///
/// solved by an augmented Lagrangian with L-BFGS inner solves. Any feasible ρ
/// is admissible (the constraints telescope along a path), and the edge
/// multipliers `y` are a flow `2y/ℓ` whose trapezoid node loads match the path
/// dual exactly, so each round yields a certified pair of bounds.
fn potential_bounds(fam: &CurveFamily, q: f64, opts: &ModulusOptions) -> PotentialBounds {
    let g = fam.graph;
    let n = g.node_count();
    let adj = Adjacency::new(g);
    let ne = adj.nbr.len();
    let measure = &g.node_measure;
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &v in &fam.e {
        fixed[v as usize] = Some(0.0);
    }
    for &v in &fam.f {
        fixed[v as usize] = Some(1.0);
    }
    let de = dijkstra(g, &fam.e, f64::INFINITY);
    let df = dijkstra(g, &fam.f, f64::INFINITY);
    let mut free = Vec::new();
    let mut slot = vec![NONE; n];
    let mut u = vec![0.0; n];
    for i in 0..n {
        match fixed[i] {
            Some(v) => u[i] = v,
            None => {
                slot[i] = free.len() as u32;
                free.push(i);
                let (a, b) = (de.dist[i], df.dist[i]);
                u[i] = if a.is_finite() && b.is_finite() { a / (a + b) } else { 0.0 };
            }
        }
    }
    let nf = free.len();
    let max_slope = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                (adj.off[i]..adj.off[i + 1])
                    .map(|e| (u[adj.nbr[e] as usize] - u[i]).abs() * adj.inv_len[e])
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let mut x: Vec<f64> = free.iter().map(|&i| u[i]).collect();
    x.extend(max_slope(&u));

    let mean_m = measure.iter().sum::<f64>() / n.max(1) as f64;
    let mut mu = 10.0 * mean_m;
    let mut y = vec![0.0; ne];
    let mut best = PotentialBounds { upper: f64::INFINITY, density: vec![0.0; n], min_integral: 0.0, lower: 0.0, iterations: 0 };
    let mut prev_violation = f64::INFINITY;
    let mut stale = 0;
    let mut uu = u.clone();
    for _ in 0..opts.potential_rounds {
        let r = lbfgs(
            |x, grad| {
                for (k, &i) in free.iter().enumerate() {
                    uu[i] = x[k];
                }
                let rho = &x[nf..];
                grad.iter_mut().for_each(|v| *v = 0.0);
                let mut val = 0.0;
                for i in 0..n {
                    let r = rho[i].abs();
                    if r > 0.0 {
                        let p = r.powf(q - 1.0);
                        val += measure[i] * p * r;
                        grad[nf + i] += q * measure[i] * p * rho[i].signum();
                    }
                }
                for i in 0..n {
                    let si = slot[i];
                    for e in adj.off[i]..adj.off[i + 1] {
                        let j = adj.nbr[e] as usize;
                        let k = 2.0 * adj.inv_len[e];
                        let c = k * (uu[j] - uu[i]) - rho[i] - rho[j];
                        let t = y[e] + mu * c;
                        if t <= 0.0 {
                            val -= y[e] * y[e] / (2.0 * mu);
                            continue;
                        }
                        val += (t * t - y[e] * y[e]) / (2.0 * mu);
                        let sj = slot[j];
                        if sj != NONE {
                            grad[sj as usize] += t * k;
                        }
                        if si != NONE {
                            grad[si as usize] -= t * k;
                        }
                        grad[nf + i] -= t;
                        grad[nf + j] -= t;
                    }
                }
                val
            },
            x,
            opts.potential_iters,
            0.0,
        );
        best.iterations += r.iterations;
        x = r.x;
        for (k, &i) in free.iter().enumerate() {
            u[i] = x[k].clamp(0.0, 1.0);
        }
        let rho: Vec<f64> = x[nf..].iter().map(|v| v.max(0.0)).collect();
        let mut violation: f64 = 0.0;
        for i in 0..n {
            for e in adj.off[i]..adj.off[i + 1] {
                let j = adj.nbr[e] as usize;
                let c = 2.0 * adj.inv_len[e] * (u[j] - u[i]) - rho[i] - rho[j];
                y[e] = (y[e] + mu * c).max(0.0);
                violation = violation.max(c);
            }
        }

        let before = (best.upper, best.lower);
        // the larger of ρ and the max-slope density of u is admissible before rescaling
        let ms = max_slope(&u);
        let cand: Vec<f64> = rho.iter().zip(&ms).map(|(a, b)| a.max(*b)).collect();
        for dens in [cand, rho] {
            let field = rho_shortest(g, &dens, &fam.e, &f_mask(n, &fam.f), |_, _| 1.0);
            let m = fam.f.iter().map(|v| field.cost[*v as usize]).fold(f64::INFINITY, f64::min);
            if m > 0.0 && m.is_finite() {
                let up = energy(g, &Density { values: dens.clone() }, q) / m.powf(q);
                if up < best.upper {
                    best.upper = up;
                    best.min_integral = m;
                    best.density = dens.iter().map(|v| v / m).collect();
                }
            }
        }
        let lower = flow_lower_bound(fam, &adj, q, &u, |i, e| {
            let j = adj.nbr[e] as usize;
            let back = adj.rev[e];
            2.0 * (y[e] - y[back]) * adj.inv_len[e] * if u[j] > u[i] { 1.0 } else { 0.0 }
        });
        best.lower = best.lower.max(lower);
        // neither bound moved by 0.1%: the remaining gap is the multipliers' accuracy
        if best.upper < before.0 * (1.0 - 1e-3) || best.lower > before.1 * (1.0 + 1e-3) {
            stale = 0;
        } else {
            stale += 1;
        }
        if best.upper.is_finite() && best.upper - best.lower <= opts.gap_target * best.upper {
            break;
        }
        if stale >= 4 {
            break;
        }
        if violation > 0.25 * prev_violation {
            mu *= 4.0;
        }
        prev_violation = violation;
    }
    best
}

/// Dual value of an E→F flow given per directed edge by `flow(i, e)`, after
/// pruning to E→F routes and rescaling along increasing `u` to exact
/// conservation.
fn flow_lower_bound(fam: &CurveFamily, adj: &Adjacency, q: f64, u: &[f64], raw: impl Fn(usize, usize) -> f64) -> f64 {
    let g = fam.graph;
    let n = g.node_count();
    let measure = &g.node_measure;
    let rev = &adj.rev;
    let flow = |i: usize, e: usize| {
        let j = adj.nbr[e] as usize;
        if u[j] <= u[i] { 0.0 } else { raw(i, e).max(0.0) }
    };
    let mut is_e = vec![false; n];
    let mut is_f = vec![false; n];
    for &v in &fam.e {
        is_e[v as usize] = true;
    }
    for &v in &fam.f {
        is_f[v as usize] = true;
    }
    // keep nodes on some positive-flow E→F route
    let mut from_e = is_e.clone();
    let mut stack: Vec<usize> = fam.e.iter().map(|v| *v as usize).collect();
    while let Some(i) = stack.pop() {
        if is_f[i] {
            continue;
        }
        for e in adj.off[i]..adj.off[i + 1] {
            let j = adj.nbr[e] as usize;
            if !from_e[j] && flow(i, e) > 0.0 {
                from_e[j] = true;
                stack.push(j);
            }
        }
    }
    let mut to_f = is_f.clone();
    let mut stack: Vec<usize> = fam.f.iter().map(|v| *v as usize).collect();
    while let Some(j) = stack.pop() {
        if is_e[j] {
            continue;
        }
        for f in adj.off[j]..adj.off[j + 1] {
            let i = adj.nbr[f] as usize;
            if !to_f[i] && flow(i, rev[f]) > 0.0 {
                to_f[i] = true;
                stack.push(i);
            }
        }
    }
    let keep: Vec<bool> = (0..n).map(|i| from_e[i] && to_f[i]).collect();
    let mut order: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    order.sort_by(|a, b| u[*a].total_cmp(&u[*b]).then(a.cmp(b)));
    let kept_total = |i: usize| -> f64 {
        (adj.off[i]..adj.off[i + 1])
            .filter(|&e| keep[adj.nbr[e] as usize])
            .map(|e| flow(i, e))
            .sum()
    };
    // two conservative routings of the same raw flow: rescale each node's
    // outflow to its inflow, or cap it at the inflow and keep only the part
    // that still reaches F
    let mut best = 0.0f64;
    for leak in [false, true] {
        let mut inflow = vec![0.0; n];
        let mut edge = vec![0.0; adj.nbr.len()];
        for &i in &order {
            if is_f[i] {
                continue;
            }
            let total = kept_total(i);
            if total == 0.0 {
                continue;
            }
            let scale = match (is_e[i], leak) {
                (true, _) => 1.0,
                (false, false) => inflow[i] / total,
                (false, true) => (inflow[i] / total).min(1.0),
            };
            for e in adj.off[i]..adj.off[i + 1] {
                let j = adj.nbr[e] as usize;
                if keep[j] {
                    let f = flow(i, e) * scale;
                    edge[e] = f;
                    inflow[j] += f;
                }
            }
        }
        if leak {
            // fraction of the mass arriving at each node that is delivered to F
            let mut reach = vec![0.0; n];
            for &i in order.iter().rev() {
                if is_f[i] {
                    reach[i] = 1.0;
                    continue;
                }
                let out: f64 = (adj.off[i]..adj.off[i + 1]).map(|e| edge[e] * reach[adj.nbr[e] as usize]).sum();
                if is_e[i] {
                    continue;
                }
                reach[i] = if inflow[i] > 0.0 { (out / inflow[i]).min(1.0) } else { 0.0 };
            }
            for &i in &order {
                for e in adj.off[i]..adj.off[i + 1] {
                    edge[e] *= reach[adj.nbr[e] as usize];
                }
            }
        }
        let mut load = vec![0.0; n];
        let mut phi = 0.0;
        for &i in &order {
            for e in adj.off[i]..adj.off[i + 1] {
                let f = edge[e];
                if f > 0.0 {
                    let j = adj.nbr[e] as usize;
                    let half = 0.5 * f / adj.inv_len[e];
                    load[i] += half;
                    load[j] += half;
                    if is_f[j] {
                        phi += f;
                    }
                }
            }
        }
        best = best.max(dual_value(q, measure, &load, phi));
    }
    best
}

/// Dual objective of a unit-normalised path flow with node loads `load` and
/// value `phi`, after the optimal scaling.
fn dual_value(q: f64, measure: &[f64], load: &[f64], phi: f64) -> f64 {
    if !(phi > 0.0) {
        return 0.0;
    }
    let inv = 1.0 / (q - 1.0);
    let b: f64 = (1.0 - 1.0 / q)
        * load
            .iter()
            .zip(measure)
            .filter(|(l, _)| **l > 0.0)
            .map(|(l, m)| l * (l / (q * m)).powf(inv))
            .sum::<f64>();
    if !(b > 0.0) {
        return 0.0;
    }
    let qd = q / (q - 1.0);
    let s = (phi / (qd * b)).powf(q - 1.0);
    s * phi / q
}

fn sorted_targets(field: &RhoField, targets: &[u32]) -> Vec<u32> {
    let mut reach: Vec<u32> = targets.iter().copied().filter(|v| field.cost[*v as usize].is_finite()).collect();
    reach.sort_by(|a, b| {
        let (ai, bi) = (*a as usize, *b as usize);
        field.cost[ai]
            .total_cmp(&field.cost[bi])
            .then(field.length[ai].total_cmp(&field.length[bi]))
            .then(a.cmp(b))
    });
    reach
}

/// Average of each node's value with the mean over its neighbours.
fn smoothed(g: &FlowGraph, rho: &[f64]) -> Vec<f64> {
    (0..g.node_count())
        .map(|i| {
            let (mut s, mut k) = (0.0, 0usize);
            for (b, _) in g.neighbors(i as u32) {
                s += rho[b as usize];
                k += 1;
            }
            if k == 0 { rho[i] } else { 0.5 * rho[i] + 0.5 * s / k as f64 }
        })
        .collect()
}

/// 2-D lattice graph (z = 0) with primitive steps of max-norm ≤ `order`,
/// restricted to grid points accepted by `keep`. Node measure is `h²`.
pub fn planar_lattice_graph(
    half_extent: f64,
    h: f64,
    order: u32,
    keep: impl Fn(f64, f64) -> bool,
) -> Result<FlowGraph> {
    if !(h > 0.0) || !(half_extent > 0.0) {
        return Err(Error::invalid("h", h, "spacing and extent must be positive"));
    }
    let k = (half_extent / h).ceil() as i64;
    let side = (2 * k + 1) as usize;
    let mut id_of = vec![NONE; side * side];
    let mut nodes = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            let (x, y) = (i as f64 * h, j as f64 * h);
            if keep(x, y) {
                id_of[(i + k) as usize * side + (j + k) as usize] = nodes.len() as u32;
                nodes.push(Point3::new(x, y, 0.0));
            }
        }
    }
    let steps = crate::geodesics::stencil(2, order);
    let mut edges = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            let a = id_of[(i + k) as usize * side + (j + k) as usize];
            if a == NONE {
                continue;
            }
            for s in &steps {
                let (ii, jj) = (i + s[0], j + s[1]);
                if ii < -k || ii > k || jj < -k || jj > k {
                    continue;
                }
                let b = id_of[(ii + k) as usize * side + (jj + k) as usize];
                if b != NONE && a < b {
                    let l = h * ((s[0] * s[0] + s[1] * s[1]) as f64).sqrt();
                    edges.push((a, b, l));
                }
            }
        }
    }
    let measure = vec![h * h; nodes.len()];
    FlowGraph::from_edges(nodes, measure, &edges)
}

/// Planar annulus graph on grid points with `r_in - h < |x| < r_out + h`; E is
/// the band `|x| ≤ r_in`, F the band `|x| ≥ r_out`.
pub fn annulus_family_graph(r_in: f64, r_out: f64, h: f64) -> Result<(FlowGraph, Vec<u32>, Vec<u32>)> {
    if !(0.0 < r_in && r_in < r_out) {
        return Err(Error::invalid("radii", format!("({r_in}, {r_out})"), "0 < r_in < r_out required"));
    }
    let g = planar_lattice_graph(r_out + 2.0 * h, h, 3, |x, y| {
        let r = x.hypot(y);
        r > r_in - h && r < r_out + h
    })?;
    let mut e = Vec::new();
    let mut f = Vec::new();
    for (i, p) in g.nodes.iter().enumerate() {
        let r = p.x.hypot(p.y);
        if r <= r_in {
            e.push(i as u32);
        } else if r >= r_out {
            f.push(i as u32);
        }
    }
    Ok((g, e, f))
}

/// The classical extremal density `1/(|x| log(r_out/r_in))` at every node.
/// Its energy over the open annulus approximates `2π/log(r_out/r_in)` for Q = 2;
/// the boundary bands add an O(h) excess.
pub fn annulus_extremal_density(g: &FlowGraph, r_in: f64, r_out: f64) -> Density {
    let c = (r_out / r_in).ln();
    Density { values: g.nodes.iter().map(|p| 1.0 / (p.x.hypot(p.y) * c)).collect() }
}

/// Energy of `rho` restricted to nodes strictly inside the annulus.
pub fn open_annulus_energy(g: &FlowGraph, rho: &Density, q: f64, r_in: f64, r_out: f64) -> f64 {
    g.nodes
        .iter()
        .zip(&g.node_measure)
        .zip(&rho.values)
        .filter(|((p, _), _)| {
            let r = p.x.hypot(p.y);
            r > r_in && r < r_out
        })
        .map(|((_, m), v)| m * v.powf(q))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoewnerSample {
    pub t: f64,
    pub separation: f64,
    pub min_diam: f64,
    pub modulus: ModulusResult,
}

/// Shared graph and segment geometry for Loewner samples at a fixed scale.
pub struct LoewnerSetup {
    pub space: SpaceModel,
    pub scale: f64,
    pub graph: FlowGraph,
}

impl LoewnerSetup {
    /// One graph covering segments for every `t ≤ t_max`; `cells` grid steps per `scale`.
    /// `width` is the transverse half-extent of the graph box in units of `scale`.
    pub fn new(space: SpaceModel, scale: f64, t_max: f64, cells: f64, width: f64) -> Result<Self> {
        if !(scale > 0.0) || !(t_max > 0.0) || !(cells >= 2.0) {
            return Err(Error::invalid("loewner", format!("scale={scale}, t_max={t_max}, cells={cells}"), "positive scale, t and at least 2 cells"));
        }
        let h = scale / cells;
        let x_lo = -scale - scale;
        let x_hi = (t_max + 1.0) * scale + scale;
        let cx = 0.5 * (x_lo + x_hi);
        if !(width > 0.0) {
            return Err(Error::invalid("width", width, "must be positive"));
        }
        let w = width * scale;
        let mut spec = GraphSpec::for_ball(space.id, Point3::new(cx, 0.0, 0.0), w, h)?;
        spec.half_extents[0] = 0.5 * (x_hi - x_lo);
        if space.id == crate::spaces::SpaceId::RotoTranslation {
            spec.spacing = [h, h, h];
        }
        let graph = build_graph(&spec)?;
        Ok(LoewnerSetup { space, scale, graph })
    }

    /// Nodes nearest to points of the x-axis segment `[a, b]`, sampled at the grid step.
    pub fn segment_nodes(&self, a: f64, b: f64) -> Result<Vec<u32>> {
        let h = self.graph.build.as_ref().map(|p| p.h).unwrap_or(self.scale / 8.0);
        let k = ((b - a) / h).round().max(1.0) as usize;
        let mut out = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let s = a + (b - a) * i as f64 / k as f64;
            out.push(self.graph.nearest_node(Point3::new(s, 0.0, 0.0))?);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn sample(&self, q: f64, t: f64, opts: &ModulusOptions) -> Result<LoewnerSample> {
        if !(t > 0.0) {
            return Err(Error::invalid("t", t, "t > 0 required"));
        }
        let s = self.scale;
        let e = self.segment_nodes(-s, 0.0)?;
        let f = self.segment_nodes(t * s, (t + 1.0) * s)?;
        let fam = CurveFamily::new(&self.graph, e.clone(), f.clone())?;
        let separation = crate::geodesics::set_distance(&self.graph, &e, &f);
        let min_diam = crate::geodesics::set_diameter(&self.graph, &e).min(crate::geodesics::set_diameter(&self.graph, &f));
        let modulus = q_modulus(&fam, q, opts)?;
        Ok(LoewnerSample { t, separation, min_diam, modulus })
    }
}

/// Two horizontal segments of length `scale` at separation `t·scale`.
pub fn loewner_estimate(space: SpaceModel, q: f64, t: f64, scale: f64, opts: &ModulusOptions) -> Result<LoewnerSample> {
    LoewnerSetup::new(space, scale, t, 16.0, 0.5)?.sample(q, t, opts)
}

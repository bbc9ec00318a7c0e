//! Direct transcription: piecewise-constant controls on `K` equal segments of
//! total time 1, exterior quadratic penalty on the endpoint, L-BFGS inner loop.

use super::{Certificate, DistanceResult, Method};
use crate::error::{Error, Result};
use crate::optim::lbfgs;
use crate::spaces::{norm3, ControlPath, Point3, Segment, Side, SpaceId, SpaceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectOptions {
    /// Number of control segments; doubled once if the penalty stalls.
    pub segments: usize,
    /// Random restarts in addition to the structured seeds.
    pub restarts: usize,
    /// Penalty weights are `10^k` for `k` in this inclusive range.
    pub penalty_exponents: (i32, i32),
    /// Inner L-BFGS iterations per penalty round.
    pub max_iter: usize,
    /// Penalty rounds every start runs before only the best are kept.
    pub screen_rounds: usize,
    /// Inner iterations per round while screening.
    pub screen_iter: usize,
    /// Starts kept after screening.
    pub survivors: usize,
    /// Required coordinate distance between certificate endpoint and target.
    pub endpoint_tol: f64,
    pub seed: u64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            segments: 32,
            restarts: 8,
            penalty_exponents: (0, 6),
            max_iter: 500,
            screen_rounds: 1,
            screen_iter: 150,
            survivors: 2,
            endpoint_tol: 1e-4,
            seed: 0,
        }
    }
}

/// Length of an explicit horizontal path from the identity to `q`; an upper
/// bound on `d(e, q)` used for box sizing and initial guesses.
pub fn explicit_upper_bound(space: &SpaceModel, q: Point3) -> f64 {
    match space.id {
        SpaceId::Euclidean3 => q.coord_dist(Point3::ORIGIN),
        // straight segment (t stays 0), then a loop enclosing |t|/4 of area
        SpaceId::Heisenberg => q.x.hypot(q.y) + (PI * q.z.abs()).sqrt(),
        SpaceId::RotoTranslation => {
            let rho = q.x.hypot(q.y);
            if rho == 0.0 {
                return q.z.abs();
            }
            let phi = q.y.atan2(q.x);
            let fwd = phi.abs() + rho + (q.z - phi).abs();
            let back_phi = if phi > 0.0 { phi - PI } else { phi + PI };
            let back = back_phi.abs() + rho + (q.z - back_phi).abs();
            fwd.min(back)
        }
    }
}

struct Problem<'a> {
    space: &'a SpaceModel,
    target: Point3,
    k: usize,
    rank: usize,
    scale: f64,
}

impl Problem<'_> {
    fn tau(&self) -> f64 {
        1.0 / self.k as f64
    }

    fn control(&self, x: &[f64], k: usize) -> [f64; 3] {
        let mut u = [0.0; 3];
        u[..self.rank].copy_from_slice(&x[k * self.rank..(k + 1) * self.rank]);
        u
    }

    fn factors(&self, x: &[f64]) -> Vec<Point3> {
        let tau = self.tau();
        let segs: Vec<Point3> = (0..self.k)
            .map(|k| self.space.exp_control(self.control(x, k), tau))
            .collect();
        match self.space.invariance_side() {
            Side::Left => segs,
            Side::Right => segs.into_iter().rev().collect(),
        }
    }

    fn position(&self, k: usize) -> usize {
        match self.space.invariance_side() {
            Side::Left => k,
            Side::Right => self.k - 1 - k,
        }
    }

    fn endpoint(&self, x: &[f64]) -> Point3 {
        self.factors(x)
            .into_iter()
            .fold(Point3::ORIGIN, |a, b| self.space.group_mul(a, b))
    }

    fn length(&self, x: &[f64]) -> f64 {
        (0..self.k).map(|k| norm3(self.control(x, k))).sum::<f64>() * self.tau()
    }

    fn error(&self, x: &[f64]) -> f64 {
        self.endpoint(x).coord_dist(self.target)
    }

    /// `J = energy/scale² + μ |endpoint − target|²` and its gradient. Endpoint
    /// derivatives come from central differences of the perturbed factor,
    /// reusing prefix and suffix products.
    fn value_grad(&self, x: &[f64], g: &mut [f64], mu: f64) -> f64 {
        let tau = self.tau();
        let f = self.factors(x);
        let n = f.len();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(Point3::ORIGIN);
        for p in &f {
            let last = *prefix.last().unwrap();
            prefix.push(self.space.group_mul(last, *p));
        }
        let mut suffix = vec![Point3::ORIGIN; n + 1];
        for i in (0..n).rev() {
            suffix[i] = self.space.group_mul(f[i], suffix[i + 1]);
        }
        let end = prefix[n];
        let err = [end.x - self.target.x, end.y - self.target.y, end.z - self.target.z];
        let inv_s2 = 1.0 / (self.scale * self.scale);
        let mut value = mu * (err[0] * err[0] + err[1] * err[1] + err[2] * err[2]);
        for k in 0..self.k {
            let u = self.control(x, k);
            let pos = self.position(k);
            for i in 0..self.rank {
                value += tau * u[i] * u[i] * inv_s2;
                let eps = 1e-6 * (1.0 + u[i].abs());
                let mut up = u;
                let mut dn = u;
                up[i] += eps;
                dn[i] -= eps;
                let ep = self.space.group_mul(
                    self.space.group_mul(prefix[pos], self.space.exp_control(up, tau)),
                    suffix[pos + 1],
                );
                let em = self.space.group_mul(
                    self.space.group_mul(prefix[pos], self.space.exp_control(dn, tau)),
                    suffix[pos + 1],
                );
                let de = [
                    (ep.x - em.x) / (2.0 * eps),
                    (ep.y - em.y) / (2.0 * eps),
                    (ep.z - em.z) / (2.0 * eps),
                ];
                g[k * self.rank + i] = 2.0 * tau * u[i] * inv_s2
                    + 2.0 * mu * (err[0] * de[0] + err[1] * de[1] + err[2] * de[2]);
            }
        }
        value
    }
}

fn constant_controls(rank: usize, k: usize, u: [f64; 3]) -> Vec<f64> {
    (0..k).flat_map(|_| u[..rank].to_vec()).collect()
}

/// Piecewise schedule: each phase `(u, duration)` is spread over a share of
/// the `k` unit-time segments proportional to its duration.
fn phased_controls(rank: usize, k: usize, phases: &[([f64; 3], f64)]) -> Vec<f64> {
    let total: f64 = phases.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return vec![0.0; rank * k];
    }
    let mut x = Vec::with_capacity(rank * k);
    for seg in 0..k {
        let t0 = seg as f64 / k as f64 * total;
        let t1 = (seg + 1) as f64 / k as f64 * total;
        // average velocity over [t0, t1] in the phase timeline, time-rescaled to 1/k
        let mut u = [0.0; 3];
        let mut start = 0.0;
        for (v, d) in phases {
            let a = t0.max(start);
            let b = t1.min(start + d);
            if b > a {
                for i in 0..3 {
                    u[i] += v[i] * (b - a);
                }
            }
            start += d;
        }
        for v in u.iter_mut() {
            *v *= k as f64;
        }
        x.extend_from_slice(&u[..rank]);
    }
    x
}

fn structured_seeds(space: &SpaceModel, q: Point3, k: usize) -> Vec<Vec<f64>> {
    let rank = space.rank();
    let straight = space.controls_for(Point3::ORIGIN, q.to_array());
    let mut seeds = vec![constant_controls(rank, k, straight)];
    match space.id {
        SpaceId::Euclidean3 => {}
        SpaceId::Heisenberg => {
            // straight segment then a loop whose enclosed area produces t
            let loop_len = (PI * q.z.abs()).sqrt();
            if loop_len > 0.0 {
                let rho = q.x.hypot(q.y);
                let dir = if rho > 0.0 { [q.x / rho, q.y / rho] } else { [1.0, 0.0] };
                let n_loop = 16;
                let sign = -q.z.signum();
                let mut phases = vec![([dir[0], dir[1], 0.0], rho)];
                for j in 0..n_loop {
                    let a = sign * 2.0 * PI * (j as f64 + 0.5) / n_loop as f64;
                    let (s, c) = a.sin_cos();
                    phases.push(([dir[0] * c - dir[1] * s, dir[0] * s + dir[1] * c, 0.0], loop_len / n_loop as f64));
                }
                seeds.push(phased_controls(rank, k, &phases));
            }
        }
        SpaceId::RotoTranslation => {
            let rho = q.x.hypot(q.y);
            let phi = q.y.atan2(q.x);
            let back_phi = if phi > 0.0 { phi - PI } else { phi + PI };
            for (heading, speed) in [(phi, 1.0), (back_phi, -1.0)] {
                let phases = [
                    ([0.0, heading.signum(), 0.0], heading.abs()),
                    ([speed, 0.0, 0.0], rho),
                    ([0.0, (q.z - heading).signum(), 0.0], (q.z - heading).abs()),
                ];
                seeds.push(phased_controls(rank, k, &phases));
            }
        }
    }
    seeds
}

struct Run {
    x: Vec<f64>,
    j: f64,
}

/// Upper bound on `d(p, q)` by direct optimization over control paths.
pub fn cc_distance_direct(
    space: &SpaceModel,
    p: Point3,
    q: Point3,
    opts: &DirectOptions,
) -> Result<DistanceResult> {
    if !p.is_finite() || !q.is_finite() {
        return Err(Error::invalid("endpoints", format!("{p} -> {q}"), "must be finite"));
    }
    if opts.segments == 0 {
        return Err(Error::invalid("segments", 0, "must be positive"));
    }
    let target = space.recenter(p, q);
    if target == Point3::ORIGIN {
        return Ok(DistanceResult {
            value: 0.0,
            method: Method::Direct,
            certificate: Certificate::Controls(ControlPath::new(p)),
            gap_hint: None,
            endpoint_error: 0.0,
            round_values: vec![0.0],
        });
    }
    match solve(space, p, target, opts, opts.segments) {
        Ok(r) => Ok(r),
        Err(Error::NonConvergence(_)) => solve(space, p, target, opts, 2 * opts.segments),
        Err(e) => Err(e),
    }
}

fn solve(
    space: &SpaceModel,
    p: Point3,
    target: Point3,
    opts: &DirectOptions,
    k: usize,
) -> Result<DistanceResult> {
    let rank = space.rank();
    let ub = explicit_upper_bound(space, target);
    let prob = Problem { space, target, k, rank, scale: ub.max(1e-3) };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));

    let mut starts = structured_seeds(space, target, k);
    let base = starts[0].clone();
    let noise = ub.max(1e-3);
    for _ in 0..opts.restarts {
        let x: Vec<f64> = base
            .iter()
            .map(|v| v + noise * (rng.gen::<f64>() * 2.0 - 1.0) * 1.5)
            .collect();
        starts.push(x);
    }

    let (e0, e1) = opts.penalty_exponents;
    let split = (e0 + opts.screen_rounds as i32 - 1).min(e1);
    let mut best_feasible = f64::INFINITY;
    let mut best_x: Option<Vec<f64>> = None;
    let mut round_values = Vec::new();

    let note = |x: &[f64], best: &mut f64, best_x: &mut Option<Vec<f64>>| {
        if prob.error(x) <= opts.endpoint_tol {
            let len = prob.length(x);
            if len < *best {
                *best = len;
                *best_x = Some(x.to_vec());
            }
        }
    };

    let mut runs: Vec<Run> = starts.into_iter().map(|x| Run { x, j: f64::INFINITY }).collect();
    for e in e0..=e1 {
        let mu = 10f64.powi(e);
        let iters = if e <= split && runs.len() > opts.survivors { opts.screen_iter } else { opts.max_iter };
        for run in runs.iter_mut() {
            let r = lbfgs(|x, g| prob.value_grad(x, g, mu), run.x.clone(), iters, 1e-10);
            run.x = r.x;
            run.j = r.f;
            note(&run.x, &mut best_feasible, &mut best_x);
        }
        round_values.push(best_feasible);
        if e == split && runs.len() > opts.survivors {
            runs.sort_by(|a, b| a.j.total_cmp(&b.j));
            runs.truncate(opts.survivors.max(1));
        }
    }

    let Some(x) = best_x else {
        let err = runs.iter().map(|r| prob.error(&r.x)).fold(f64::INFINITY, f64::min);
        return Err(Error::NonConvergence(format!(
            "endpoint error {err:e} above {:e} with {k} segments",
            opts.endpoint_tol
        )));
    };
    let tau = prob.tau();
    let mut path = ControlPath::new(p);
    for kk in 0..k {
        let u = prob.control(&x, kk);
        path.segments.push(Segment { u, duration: tau });
    }
    Ok(DistanceResult {
        value: best_feasible,
        method: Method::Direct,
        certificate: Certificate::Controls(path),
        gap_hint: None,
        endpoint_error: prob.error(&x),
        round_values,
    })
}

//! The explicit contactomorphism `f : (RT, α) → (H¹, β)`,
//! `f(x,y,θ) = (−x cosθ − y sinθ, θ, 4x sinθ − 4y cosθ − 2xθ cosθ − 2yθ sinθ)`,
//! with `f*β = 4α`.

use crate::error::{Error, Result};
use crate::geodesics::{cc_distance_direct, DirectOptions};
use crate::spaces::{det3_f64, Point3, Segment, SpaceModel, TangentVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactMapResult {
    pub image: Point3,
    /// Row-major, `jacobian[i][j] = ∂f_i/∂x_j`.
    pub jacobian: Mat3,
}

pub fn contacto_point(p: Point3) -> Point3 {
    let (s, c) = p.z.sin_cos();
    let (x, y, th) = (p.x, p.y, p.z);
    Point3::new(
        -x * c - y * s,
        th,
        4.0 * x * s - 4.0 * y * c - 2.0 * x * th * c - 2.0 * y * th * s,
    )
}

pub fn contacto_jacobian(p: Point3) -> Mat3 {
    let (s, c) = p.z.sin_cos();
    let (x, y, th) = (p.x, p.y, p.z);
    [
        [-c, -s, x * s - y * c],
        [0.0, 0.0, 1.0],
        [
            4.0 * s - 2.0 * th * c,
            -4.0 * c - 2.0 * th * s,
            2.0 * x * c + 2.0 * y * s + 2.0 * x * th * s - 2.0 * y * th * c,
        ],
    ]
}

pub fn contacto_map(p: Point3) -> ContactMapResult {
    ContactMapResult { image: contacto_point(p), jacobian: contacto_jacobian(p) }
}

/// Central-difference Jacobian of `f`, the cross-check for the analytic one.
pub fn contacto_jacobian_fd(p: Point3, h: f64) -> Mat3 {
    let mut j = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut a = p.to_array();
        let mut b = p.to_array();
        a[col] += h;
        b[col] -= h;
        let fa = contacto_point(Point3::from_array(a)).to_array();
        let fb = contacto_point(Point3::from_array(b)).to_array();
        for row in 0..3 {
            j[row][col] = (fa[row] - fb[row]) / (2.0 * h);
        }
    }
    j
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
    }
    out
}

/// Inverts `f` using that it preserves θ: the remaining unknowns solve a 2×2
/// linear system whose determinant is identically 4.
pub fn contacto_inverse(q: Point3, tol: f64) -> Result<Point3> {
    let th = q.y;
    let (s, c) = th.sin_cos();
    let a = [[-c, -s], [4.0 * s - 2.0 * th * c, -4.0 * c - 2.0 * th * s]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::Singular(format!("2x2 determinant {det} at theta = {th}")));
    }
    let x = (q.x * a[1][1] - a[0][1] * q.z) / det;
    let y = (a[0][0] * q.z - a[1][0] * q.x) / det;
    let p = Point3::new(x, y, th);
    let back = contacto_point(p);
    let err = back.coord_dist(q) / (1.0 + q.coord_dist(Point3::ORIGIN));
    if err > tol {
        return Err(Error::NonConvergence(format!(
            "round-trip residual {err:e} exceeds {tol:e} at {q}"
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianKind {
    Analytic,
    FiniteDifference(f64),
}

fn jacobian_of(kind: JacobianKind, p: Point3) -> Mat3 {
    match kind {
        JacobianKind::Analytic => contacto_jacobian(p),
        JacobianKind::FiniteDifference(h) => contacto_jacobian_fd(p, h),
    }
}

/// Random base point in `[-5,5]³` and vector in `[-1,1]³`.
fn sample_pair(rng: &mut ChaCha8Rng) -> (Point3, [f64; 3]) {
    let p = Point3::new(
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
    );
    let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    (p, v)
}

/// Pullback residual `β_{f(p)}(Df_p v) − 4 α_p(v)` relative to `1 + |4α_p(v)|`.
pub fn pullback_residual(p: Point3, v: [f64; 3], kind: JacobianKind) -> f64 {
    let h = SpaceModel::HEISENBERG;
    let rt = SpaceModel::ROTO_TRANSLATION;
    let fp = contacto_point(p);
    let w = apply(&jacobian_of(kind, p), v);
    let beta = h.contact_form_eval(fp, &TangentVector::new(fp, w)).unwrap_or(0.0);
    let alpha = rt.contact_form_eval(p, &TangentVector::new(p, v)).unwrap_or(0.0);
    (beta - 4.0 * alpha).abs() / (1.0 + (4.0 * alpha).abs())
}

/// Max relative pullback residual over `samples` seeded random `(p, v)`.
pub fn pullback_check(samples: usize, seed: u64, kind: JacobianKind) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let (p, v) = sample_pair(&mut rng);
            pullback_residual(p, v, kind)
        })
        .fold(0.0, f64::max)
}

/// `|β_{f(p)}(Df_p v)|`: zero exactly when `f` maps `v` into the Heisenberg
/// horizontal plane.
pub fn horizontality_defect(p: Point3, v: [f64; 3]) -> f64 {
    let fp = contacto_point(p);
    let w = apply(&contacto_jacobian(p), v);
    SpaceModel::HEISENBERG
        .contact_form_eval(fp, &TangentVector::new(fp, w))
        .unwrap_or(0.0)
        .abs()
}

/// Max defect over both RT frame fields at seeded random points.
pub fn pushforward_horizontality_check(samples: usize, seed: u64) -> f64 {
    let rt = SpaceModel::ROTO_TRANSLATION;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (p, _) = sample_pair(&mut rng);
        let (x, y) = rt.frame_eval(p);
        worst = worst.max(horizontality_defect(p, x.c)).max(horizontality_defect(p, y.c));
    }
    worst
}

/// Max entrywise gap between the analytic and finite-difference Jacobians.
pub fn jacobian_agreement(samples: usize, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (p, _) = sample_pair(&mut rng);
        let a = contacto_jacobian(p);
        let b = contacto_jacobian_fd(p, h);
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((a[i][j] - b[i][j]).abs());
            }
        }
    }
    worst
}

pub fn jacobian_determinant(p: Point3) -> f64 {
    det3_f64(&contacto_jacobian(p))
}

#[derive(Debug, Clone, Serialize)]
pub struct BilipEstimate {
    pub ball_radius: f64,
    pub pairs: usize,
    /// min of d_H(f p, f q) / d_RT(p, q)
    pub lower: f64,
    /// max of the same ratio
    pub upper: f64,
}

/// Random point in the RT ball of radius `r` about the origin: the endpoint of
/// a random two-segment horizontal path of length below `r`.
fn sample_in_rt_ball(rng: &mut ChaCha8Rng, r: f64) -> Point3 {
    let rt = SpaceModel::ROTO_TRANSLATION;
    let mut p = Point3::ORIGIN;
    let total = r * rng.gen_range(0.05..0.999);
    let split = rng.gen_range(0.0..1.0);
    for len in [total * split, total * (1.0 - split)] {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let seg = Segment::planar(a.cos(), a.sin(), len);
        p = rt.flow_segment(p, seg.u, seg.duration);
    }
    p
}

/// Empirical distortion of `f` on pairs inside the RT ball of radius `ball_radius`.
pub fn local_bilip_estimate(
    ball_radius: f64,
    pairs: usize,
    seed: u64,
    opts: &DirectOptions,
) -> Result<BilipEstimate> {
    if !(ball_radius > 0.0) || ball_radius > 2.0 {
        return Err(Error::invalid("ball_radius", ball_radius, "must lie in (0, 2]"));
    }
    let rt = SpaceModel::ROTO_TRANSLATION;
    let h = SpaceModel::HEISENBERG;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let p = sample_in_rt_ball(&mut rng, ball_radius);
        let q = sample_in_rt_ball(&mut rng, ball_radius);
        if p.coord_dist(q) < 1e-6 {
            continue;
        }
        let o = DirectOptions { seed: rng.gen(), ..opts.clone() };
        let d_rt = cc_distance_direct(&rt, p, q, &o)?.value;
        let d_h = cc_distance_direct(&h, contacto_point(p), contacto_point(q), &o)?.value;
        let ratio = d_h / d_rt;
        lower = lower.min(ratio);
        upper = upper.max(ratio);
        done += 1;
    }
    Ok(BilipEstimate { ball_radius, pairs, lower, upper })
}

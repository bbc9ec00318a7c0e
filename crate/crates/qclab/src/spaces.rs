//! The three model spaces on ℝ³: the Heisenberg group, the roto-translation
//! group (universal cover of SE(2), θ unwrapped) and Euclidean ℝ³.
//!
//! Formulas are taken verbatim. With the Heisenberg law
//! `(x,y,t)(x',y',t') = (x+x', y+y', t+t'−2yx'+2xy')` the frame
//! `X = ∂x + 2y∂t`, `Y = ∂y − 2x∂t` is invariant under *right* translations,
//! so Heisenberg distances are right-invariant. Roto-translation and Euclidean
//! frames are left-invariant. [`SpaceModel::translate`] always uses the side
//! that preserves the frame.

use crate::error::{Error, Result};
use crate::trigpoly::{det3, TrigPoly};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance between coordinate triples.
    pub fn coord_dist(self, o: Point3) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }

    pub fn add_scaled(self, v: [f64; 3], s: f64) -> Point3 {
        Point3::new(self.x + s * v[0], self.y + s * v[1], self.z + s * v[2])
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl FromStr for Point3 {
    type Err = Error;

    /// Parses `x,y,z`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::invalid("point", s, "expected three comma-separated numbers"));
        }
        let mut v = [0.0; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse::<f64>()
                .map_err(|_| Error::invalid("point", s, "coordinates must be real numbers"))?;
        }
        let p = Point3::from_array(v);
        if !p.is_finite() {
            return Err(Error::invalid("point", s, "coordinates must be finite"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Point3,
    pub c: [f64; 3],
}

impl TangentVector {
    pub fn new(base: Point3, c: [f64; 3]) -> Self {
        TangentVector { base, c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceId {
    #[serde(alias = "heis")]
    Heisenberg,
    #[serde(alias = "rt")]
    RotoTranslation,
    #[serde(alias = "euclid")]
    Euclidean3,
}

impl SpaceId {
    pub fn short_name(self) -> &'static str {
        match self {
            SpaceId::Heisenberg => "heis",
            SpaceId::RotoTranslation => "rt",
            SpaceId::Euclidean3 => "euclid",
        }
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SpaceId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heis" | "heisenberg" | "h" | "h1" => Ok(SpaceId::Heisenberg),
            "rt" | "roto-translation" | "rototranslation" | "se2" => Ok(SpaceId::RotoTranslation),
            "euclid" | "euclidean" | "euclidean3" | "r3" => Ok(SpaceId::Euclidean3),
            _ => Err(Error::invalid("space", s, "one of heis, rt, euclid")),
        }
    }
}

/// Which translations preserve the horizontal frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Piecewise-constant control segment: velocity `Σ u_i F_i` for `duration`.
/// For the two groups `u[2]` is ignored (always zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub u: [f64; 3],
    pub duration: f64,
}

impl Segment {
    pub fn planar(u1: f64, u2: f64, duration: f64) -> Self {
        Segment { u: [u1, u2, 0.0], duration }
    }

    pub fn length(&self) -> f64 {
        self.duration * norm3(self.u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub start: Point3,
    pub segments: Vec<Segment>,
}

impl ControlPath {
    pub fn new(start: Point3) -> Self {
        ControlPath { start, segments: Vec::new() }
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceModel {
    pub id: SpaceId,
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn det3_f64(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

// sin(a)/a and (1 − cos a)/a, with series near zero
fn sinc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        1.0 - a * a / 6.0
    } else {
        a.sin() / a
    }
}

fn cosc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        a / 2.0 - a * a * a / 24.0
    } else {
        (1.0 - a.cos()) / a
    }
}

impl SpaceModel {
    pub const HEISENBERG: SpaceModel = SpaceModel { id: SpaceId::Heisenberg };
    pub const ROTO_TRANSLATION: SpaceModel = SpaceModel { id: SpaceId::RotoTranslation };
    pub const EUCLIDEAN3: SpaceModel = SpaceModel { id: SpaceId::Euclidean3 };

    pub fn new(id: SpaceId) -> Self {
        SpaceModel { id }
    }

    /// Number of control channels (2 for the groups, 3 for ℝ³).
    pub fn rank(&self) -> usize {
        match self.id {
            SpaceId::Euclidean3 => 3,
            _ => 2,
        }
    }

    /// Topological dimension of the metric measure space at small scales.
    pub fn local_dimension(&self) -> f64 {
        match self.id {
            SpaceId::Euclidean3 => 3.0,
            _ => 4.0,
        }
    }

    pub fn invariance_side(&self) -> Side {
        match self.id {
            SpaceId::Heisenberg => Side::Right,
            _ => Side::Left,
        }
    }

    pub fn identity(&self) -> Point3 {
        Point3::ORIGIN
    }

    pub fn group_mul(&self, p: Point3, q: Point3) -> Point3 {
        match self.id {
            SpaceId::Heisenberg => Point3::new(
                p.x + q.x,
                p.y + q.y,
                p.z + q.z - 2.0 * p.y * q.x + 2.0 * p.x * q.y,
            ),
            SpaceId::RotoTranslation => {
                let (s, c) = p.z.sin_cos();
                Point3::new(p.x + c * q.x - s * q.y, p.y + s * q.x + c * q.y, p.z + q.z)
            }
            SpaceId::Euclidean3 => Point3::new(p.x + q.x, p.y + q.y, p.z + q.z),
        }
    }

    pub fn group_inverse(&self, p: Point3) -> Point3 {
        match self.id {
            SpaceId::Heisenberg | SpaceId::Euclidean3 => Point3::new(-p.x, -p.y, -p.z),
            SpaceId::RotoTranslation => {
                let (s, c) = p.z.sin_cos();
                Point3::new(-(c * p.x + s * p.y), s * p.x - c * p.y, -p.z)
            }
        }
    }

    /// Frame-preserving translation by `g`: `g·p` for left-invariant frames,
    /// `p·g` for the Heisenberg frame.
    pub fn translate(&self, g: Point3, p: Point3) -> Point3 {
        match self.invariance_side() {
            Side::Left => self.group_mul(g, p),
            Side::Right => self.group_mul(p, g),
        }
    }

    /// The translation taking `p` to the identity, i.e. `q ↦ τ(q)` with `τ(p) = e`.
    pub fn recenter(&self, p: Point3, q: Point3) -> Point3 {
        self.translate(self.group_inverse(p), q)
    }

    /// All frame fields at `p` as rows; only the first [`rank`](Self::rank) are used.
    pub fn frame_matrix(&self, p: Point3) -> [[f64; 3]; 3] {
        match self.id {
            SpaceId::Heisenberg => [
                [1.0, 0.0, 2.0 * p.y],
                [0.0, 1.0, -2.0 * p.x],
                [0.0, 0.0, 0.0],
            ],
            SpaceId::RotoTranslation => {
                let (s, c) = p.z.sin_cos();
                [[c, s, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]
            }
            SpaceId::Euclidean3 => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn frame_eval(&self, p: Point3) -> (TangentVector, TangentVector) {
        let f = self.frame_matrix(p);
        (TangentVector::new(p, f[0]), TangentVector::new(p, f[1]))
    }

    /// Velocity `Σ u_i F_i(p)`.
    pub fn velocity(&self, p: Point3, u: [f64; 3]) -> [f64; 3] {
        let f = self.frame_matrix(p);
        let mut v = [0.0; 3];
        for (i, row) in f.iter().enumerate().take(self.rank()) {
            for k in 0..3 {
                v[k] += u[i] * row[k];
            }
        }
        v
    }

    /// Contact form (β for Heisenberg, α for RT); Euclidean ℝ³ has none.
    pub fn contact_form_eval(&self, p: Point3, v: &TangentVector) -> Option<f64> {
        let c = v.c;
        match self.id {
            SpaceId::Heisenberg => Some(c[2] - 2.0 * p.y * c[0] + 2.0 * p.x * c[1]),
            SpaceId::RotoTranslation => {
                let (s, co) = p.z.sin_cos();
                Some(s * c[0] - co * c[1])
            }
            SpaceId::Euclidean3 => None,
        }
    }

    /// Haar measure density with respect to Lebesgue measure.
    pub fn measure_density(&self, _p: Point3) -> f64 {
        1.0
    }

    /// Exact flow of the constant control `u` for time `tau` starting at `p`.
    pub fn flow_segment(&self, p: Point3, u: [f64; 3], tau: f64) -> Point3 {
        match self.id {
            SpaceId::Heisenberg => Point3::new(
                p.x + u[0] * tau,
                p.y + u[1] * tau,
                p.z + 2.0 * tau * (p.y * u[0] - p.x * u[1]),
            ),
            SpaceId::RotoTranslation => {
                let a = u[1] * tau;
                let dx = u[0] * tau * sinc(a);
                let dy = u[0] * tau * cosc(a);
                let (s, c) = p.z.sin_cos();
                Point3::new(p.x + c * dx - s * dy, p.y + s * dx + c * dy, p.z + a)
            }
            SpaceId::Euclidean3 => p.add_scaled(u, tau),
        }
    }

    /// Group element reached from the identity by the constant control `u`.
    pub fn exp_control(&self, u: [f64; 3], tau: f64) -> Point3 {
        self.flow_segment(Point3::ORIGIN, u, tau)
    }

    /// Endpoint of a control path using the exact segment flows.
    pub fn endpoint(&self, path: &ControlPath) -> Point3 {
        path.segments
            .iter()
            .fold(path.start, |p, s| self.flow_segment(p, s.u, s.duration))
    }

    /// Classical RK4 integration of `γ' = Σ u_i F_i(γ)`, at least 16 steps per
    /// segment and step at most `dt`. Returns every sampled point, start included.
    pub fn horizontal_flow(&self, path: &ControlPath, dt: f64) -> Result<Vec<Point3>> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", dt, "must be positive and finite"));
        }
        if !path.start.is_finite() {
            return Err(Error::invalid("start", path.start, "must be finite"));
        }
        let mut out = vec![path.start];
        let mut p = path.start;
        for seg in &path.segments {
            if !seg.u.iter().all(|v| v.is_finite()) || !seg.duration.is_finite() {
                return Err(Error::invalid("controls", format!("{:?}", seg), "must be finite"));
            }
            if seg.duration < 0.0 {
                return Err(Error::invalid("duration", seg.duration, "must be nonnegative"));
            }
            if seg.duration == 0.0 {
                continue;
            }
            let steps = ((seg.duration / dt).ceil() as usize).max(16);
            let h = seg.duration / steps as f64;
            for _ in 0..steps {
                p = self.rk4_step(p, seg.u, h);
                out.push(p);
            }
        }
        Ok(out)
    }

    fn rk4_step(&self, p: Point3, u: [f64; 3], h: f64) -> Point3 {
        let k1 = self.velocity(p, u);
        let k2 = self.velocity(p.add_scaled(k1, h / 2.0), u);
        let k3 = self.velocity(p.add_scaled(k2, h / 2.0), u);
        let k4 = self.velocity(p.add_scaled(k3, h), u);
        let mut v = [0.0; 3];
        for k in 0..3 {
            v[k] = (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]) / 6.0;
        }
        p.add_scaled(v, h)
    }

    /// Flow commutator: follow X, Y, −X, −Y for time `h` each; the displacement
    /// divided by `h²` approximates `[X, Y](p)`.
    pub fn bracket_numeric(&self, p: Point3, h: f64) -> Result<TangentVector> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", h, "must be positive"));
        }
        let ex = [1.0, 0.0, 0.0];
        let ey = [0.0, 1.0, 0.0];
        let q = self.flow_segment(p, ex, h);
        let q = self.flow_segment(q, ey, h);
        let q = self.flow_segment(q, ex, -h);
        let q = self.flow_segment(q, ey, -h);
        let s = 1.0 / (h * h);
        Ok(TangentVector::new(
            p,
            [(q.x - p.x) * s, (q.y - p.y) * s, (q.z - p.z) * s],
        ))
    }

    /// The printed bracket `[X, Y]` for the two groups, zero for ℝ³.
    pub fn bracket_exact(&self, p: Point3) -> TangentVector {
        let c = match self.id {
            SpaceId::Heisenberg => [0.0, 0.0, -4.0],
            SpaceId::RotoTranslation => [p.z.sin(), -p.z.cos(), 0.0],
            SpaceId::Euclidean3 => [0.0, 0.0, 0.0],
        };
        TangentVector::new(p, c)
    }

    /// Determinant of the differential of the left translation `L_g`, evaluated
    /// symbolically in `cos θ`, `sin θ` so that it is exactly 1 for both groups.
    pub fn left_translation_jacobian(&self, g: Point3) -> f64 {
        let k = TrigPoly::constant;
        let m: [[TrigPoly; 3]; 3] = match self.id {
            SpaceId::Heisenberg => [
                [k(1.0), k(0.0), k(0.0)],
                [k(0.0), k(1.0), k(0.0)],
                [k(-2.0 * g.y), k(2.0 * g.x), k(1.0)],
            ],
            SpaceId::RotoTranslation => {
                let c = TrigPoly::cos();
                let s = TrigPoly::sin();
                [
                    [c.clone(), -&s, k(0.0)],
                    [s, c, k(0.0)],
                    [k(0.0), k(0.0), k(1.0)],
                ]
            }
            SpaceId::Euclidean3 => [
                [k(1.0), k(0.0), k(0.0)],
                [k(0.0), k(1.0), k(0.0)],
                [k(0.0), k(0.0), k(1.0)],
            ],
        };
        let d = det3(&m).reduce();
        d.as_constant()
            .unwrap_or_else(|| det3_f64(&self.left_translation_differential(g)))
    }

    /// Differential of `L_g` (row-major; constant in the base point for all three spaces).
    pub fn left_translation_differential(&self, g: Point3) -> [[f64; 3]; 3] {
        match self.id {
            SpaceId::Heisenberg => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-2.0 * g.y, 2.0 * g.x, 1.0]],
            SpaceId::RotoTranslation => {
                let (s, c) = g.z.sin_cos();
                [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
            }
            SpaceId::Euclidean3 => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Least-squares controls whose velocity at `p` best matches `v`.
    pub fn controls_for(&self, p: Point3, v: [f64; 3]) -> [f64; 3] {
        let f = self.frame_matrix(p);
        let r = self.rank();
        // Normal equations for the r×r Gram system.
        let mut gram = [[0.0; 3]; 3];
        let mut rhs = [0.0; 3];
        for i in 0..r {
            for j in 0..r {
                gram[i][j] = (0..3).map(|k| f[i][k] * f[j][k]).sum();
            }
            rhs[i] = (0..3).map(|k| f[i][k] * v[k]).sum();
        }
        let mut u = [0.0; 3];
        if r == 3 {
            return v;
        }
        let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
        u[0] = (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det;
        u[1] = (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det;
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const H: SpaceModel = SpaceModel::HEISENBERG;
    const RT: SpaceModel = SpaceModel::ROTO_TRANSLATION;
    const E3: SpaceModel = SpaceModel::EUCLIDEAN3;

    fn close(a: Point3, b: Point3, tol: f64) -> bool {
        a.coord_dist(b) <= tol
    }

    #[test]
    fn group_mul_examples() {
        let a = Point3::new(0.3, -1.2, 4.0);
        assert_eq!(H.group_mul(Point3::ORIGIN, a), a);
        assert_eq!(
            H.group_mul(Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)),
            Point3::new(1.0, 1.0, 2.0)
        );
        let r = RT.group_mul(Point3::new(0.0, 0.0, PI / 2.0), Point3::new(1.0, 0.0, 0.0));
        assert!(close(r, Point3::new(0.0, 1.0, PI / 2.0), 1e-15));
    }

    #[test]
    fn inverse_examples() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(H.group_inverse(p), Point3::new(-1.0, -2.0, -3.0));
        assert_eq!(RT.group_inverse(Point3::new(0.0, 0.0, 0.4)), Point3::new(0.0, 0.0, -0.4));
        for s in [H, RT, E3] {
            assert_eq!(s.group_inverse(Point3::ORIGIN), Point3::ORIGIN);
            assert!(close(s.group_mul(p, s.group_inverse(p)), Point3::ORIGIN, 1e-14));
        }
    }

    #[test]
    fn frame_examples() {
        let (x, y) = H.frame_eval(Point3::ORIGIN);
        assert_eq!(x.c, [1.0, 0.0, 0.0]);
        assert_eq!(y.c, [0.0, 1.0, 0.0]);
        assert_eq!(H.frame_eval(Point3::new(0.0, 1.0, 0.0)).0.c, [1.0, 0.0, 2.0]);
        let x = RT.frame_eval(Point3::new(0.0, 0.0, PI / 2.0)).0;
        assert!(x.c[0].abs() < 1e-16 && (x.c[1] - 1.0).abs() < 1e-16 && x.c[2] == 0.0);
    }

    #[test]
    fn contact_form_examples() {
        let v = TangentVector::new(Point3::ORIGIN, [0.0, 0.0, 1.0]);
        assert_eq!(H.contact_form_eval(Point3::ORIGIN, &v), Some(1.0));
        let e1 = TangentVector::new(Point3::ORIGIN, [1.0, 0.0, 0.0]);
        assert_eq!(RT.contact_form_eval(Point3::ORIGIN, &e1), Some(0.0));
        assert_eq!(E3.contact_form_eval(Point3::ORIGIN, &e1), None);
    }

    #[test]
    fn bracket_examples() {
        let b = RT.bracket_numeric(Point3::new(0.0, 0.0, PI / 2.0), 1e-3).unwrap();
        assert!((b.c[0] - 1.0).abs() < 1e-2 && b.c[1].abs() < 1e-2 && b.c[2].abs() < 1e-2);
        let b = RT.bracket_numeric(Point3::ORIGIN, 1e-3).unwrap();
        assert!(b.c[0].abs() < 1e-2 && (b.c[1] + 1.0).abs() < 1e-2 && b.c[2].abs() < 1e-2);
        let b = E3.bracket_numeric(Point3::new(1.0, 2.0, 3.0), 1e-3).unwrap();
        assert!(b.c.iter().all(|v| v.abs() < 1e-9));
        let b = H.bracket_numeric(Point3::new(0.5, -0.2, 1.0), 1e-3).unwrap();
        assert!((b.c[2] + 4.0).abs() < 1e-6);
        assert!(RT.bracket_numeric(Point3::ORIGIN, 0.0).is_err());
        assert!(RT.bracket_numeric(Point3::ORIGIN, -1.0).is_err());
    }

    #[test]
    fn bracket_error_is_first_order() {
        let p = Point3::new(0.1, 0.2, 0.7);
        let exact = RT.bracket_exact(p).c;
        let err = |h: f64| {
            let b = RT.bracket_numeric(p, h).unwrap().c;
            norm3([b[0] - exact[0], b[1] - exact[1], b[2] - exact[2]])
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn jacobian_is_exactly_one() {
        assert_eq!(RT.left_translation_jacobian(Point3::new(1.0, 2.0, 0.7)), 1.0);
        assert_eq!(H.left_translation_jacobian(Point3::new(3.0, -1.0, 5.0)), 1.0);
        assert_eq!(E3.left_translation_jacobian(Point3::new(3.0, -1.0, 5.0)), 1.0);
    }

    #[test]
    fn flow_examples() {
        let mut path = ControlPath::new(Point3::ORIGIN);
        path.segments.push(Segment::planar(1.0, 0.0, 1.0));
        let traj = H.horizontal_flow(&path, 1e-2).unwrap();
        assert!(close(*traj.last().unwrap(), Point3::new(1.0, 0.0, 0.0), 1e-14));

        let mut path = ControlPath::new(Point3::ORIGIN);
        path.segments.push(Segment::planar(0.0, 1.0, 0.8));
        let traj = RT.horizontal_flow(&path, 1e-2).unwrap();
        assert!(close(*traj.last().unwrap(), Point3::new(0.0, 0.0, 0.8), 1e-14));

        let empty = ControlPath::new(Point3::new(1.0, 1.0, 1.0));
        assert_eq!(E3.horizontal_flow(&empty, 0.1).unwrap(), vec![empty.start]);

        let mut bad = ControlPath::new(Point3::ORIGIN);
        bad.segments.push(Segment::planar(f64::NAN, 0.0, 1.0));
        assert!(RT.horizontal_flow(&bad, 0.1).is_err());
    }

    #[test]
    fn rk4_matches_closed_form() {
        let mut path = ControlPath::new(Point3::new(0.3, -0.4, 1.1));
        path.segments.push(Segment::planar(0.7, -1.3, 0.9));
        path.segments.push(Segment::planar(-0.2, 0.5, 1.4));
        for s in [H, RT] {
            let rk = *s.horizontal_flow(&path, 1e-3).unwrap().last().unwrap();
            assert!(close(rk, s.endpoint(&path), 1e-11));
        }
    }

    #[test]
    fn flow_is_translation_of_exponential() {
        let p = Point3::new(0.3, -0.4, 1.1);
        let u = [0.7, -1.3, 0.0];
        for s in [H, RT] {
            let e = s.exp_control(u, 0.6);
            let expected = match s.invariance_side() {
                Side::Left => s.group_mul(p, e),
                Side::Right => s.group_mul(e, p),
            };
            assert!(close(s.flow_segment(p, u, 0.6), expected, 1e-14));
        }
    }

    #[test]
    fn controls_for_inverts_velocity() {
        let p = Point3::new(0.4, 0.1, -0.3);
        for s in [H, RT, E3] {
            let u = [0.3, -0.8, if s.rank() == 3 { 0.5 } else { 0.0 }];
            let v = s.velocity(p, u);
            let back = s.controls_for(p, v);
            for k in 0..3 {
                assert!((back[k] - u[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_parsing() {
        assert_eq!("1, 2,3".parse::<Point3>().unwrap(), Point3::new(1.0, 2.0, 3.0));
        assert!("1,2".parse::<Point3>().is_err());
        assert!("a,b,c".parse::<Point3>().is_err());
        assert!("inf,0,0".parse::<Point3>().is_err());
    }
}

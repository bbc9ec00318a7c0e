//! Planar sharpness examples: `e^z` on a half-strip and on a strip, and the
//! radial stretch `f_λ(z) = z|z|^{(λ−1)/(2−λ)}` on the strip `|y| ≤ 1`.

use crate::error::{Error, Result};
use crate::volume::{fit_loglog, GrowthFit};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Slack for membership on closed boundaries, so boundary images survive rounding.
const EDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanarExample {
    /// `e^z` from the half-strip onto the upper half-plane minus the unit disk.
    ExpHalfStrip,
    /// `e^z` from the strip `0 ≤ y ≤ π` onto the punctured closed upper half-plane.
    ExpStrip,
    /// Radial stretch from `|y| ≤ 1` onto its image.
    Stretch,
}

impl std::str::FromStr for PlanarExample {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp-half-strip" => Ok(PlanarExample::ExpHalfStrip),
            "exp-strip" => Ok(PlanarExample::ExpStrip),
            "stretch" => Ok(PlanarExample::Stretch),
            _ => Err(Error::invalid("example", s, "one of exp-half-strip, exp-strip, stretch")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PlanarDomain {
    /// `0 ≤ y ≤ π`
    Strip,
    /// `x ≥ 0, 0 ≤ y ≤ π`
    HalfStrip,
    /// `y ≥ 0, |z| ≥ 1`
    HalfPlaneMinusDisk,
    /// `y ≥ 0, z ≠ 0`
    PuncturedHalfPlane,
    /// `|y| ≤ 1`
    SymmetricStrip,
    /// `f_λ(|y| ≤ 1)`
    StretchedStrip { lambda: f64 },
}

impl PlanarDomain {
    pub fn contains(&self, z: [f64; 2]) -> bool {
        let [x, y] = z;
        if !x.is_finite() || !y.is_finite() {
            return false;
        }
        match *self {
            PlanarDomain::Strip => y >= -EDGE && y <= PI + EDGE,
            PlanarDomain::HalfStrip => x >= -EDGE && y >= -EDGE && y <= PI + EDGE,
            PlanarDomain::HalfPlaneMinusDisk => y >= -EDGE && x.hypot(y) >= 1.0 - EDGE,
            PlanarDomain::PuncturedHalfPlane => y >= -EDGE && (x != 0.0 || y != 0.0),
            PlanarDomain::SymmetricStrip => y.abs() <= 1.0 + EDGE,
            PlanarDomain::StretchedStrip { lambda } => {
                let r = x.hypot(y);
                // f_λ⁻¹(w) = w |w|^{1−λ}
                r == 0.0 || (y * r.powf(1.0 - lambda)).abs() <= 1.0 + EDGE
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PlanarDomain::Strip => "strip",
            PlanarDomain::HalfStrip => "half-strip",
            PlanarDomain::HalfPlaneMinusDisk => "half-plane minus disk",
            PlanarDomain::PuncturedHalfPlane => "punctured half-plane",
            PlanarDomain::SymmetricStrip => "symmetric strip",
            PlanarDomain::StretchedStrip { .. } => "stretched strip",
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 1.0 && lambda < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid("lambda", lambda, "must lie in (1, 2)"))
    }
}

impl PlanarExample {
    pub fn source(&self) -> PlanarDomain {
        match self {
            PlanarExample::ExpHalfStrip => PlanarDomain::HalfStrip,
            PlanarExample::ExpStrip => PlanarDomain::Strip,
            PlanarExample::Stretch => PlanarDomain::SymmetricStrip,
        }
    }

    pub fn target(&self, lambda: Option<f64>) -> Result<PlanarDomain> {
        Ok(match self {
            PlanarExample::ExpHalfStrip => PlanarDomain::HalfPlaneMinusDisk,
            PlanarExample::ExpStrip => PlanarDomain::PuncturedHalfPlane,
            PlanarExample::Stretch => {
                let lambda = lambda.ok_or_else(|| Error::invalid("lambda", "none", "required for the stretch"))?;
                check_lambda(lambda)?;
                PlanarDomain::StretchedStrip { lambda }
            }
        })
    }
}

fn raw_map(example: PlanarExample, z: [f64; 2], lambda: f64) -> [f64; 2] {
    match example {
        PlanarExample::ExpHalfStrip | PlanarExample::ExpStrip => {
            let e = z[0].exp();
            let (s, c) = z[1].sin_cos();
            [e * c, e * s]
        }
        PlanarExample::Stretch => {
            let r = z[0].hypot(z[1]);
            if r == 0.0 {
                return [0.0, 0.0];
            }
            let k = r.powf((lambda - 1.0) / (2.0 - lambda));
            [z[0] * k, z[1] * k]
        }
    }
}

/// The example's map at `z`; `lambda` is needed only by the stretch.
pub fn planar_map(example: PlanarExample, z: [f64; 2], lambda: Option<f64>) -> Result<[f64; 2]> {
    let target = example.target(lambda)?;
    let source = example.source();
    if !source.contains(z) {
        return Err(Error::invalid("z", format!("({}, {})", z[0], z[1]), &format!("must lie in the {}", source.tag())));
    }
    let w = raw_map(example, z, lambda.unwrap_or(1.5));
    debug_assert!(target.contains(w), "{w:?} not in {}", target.tag());
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatationEstimate {
    pub point: [f64; 2],
    pub radii: Vec<f64>,
    /// `max |f(z') − f(z)| / min |f(z') − f(z)|` over `|z' − z| = r`.
    pub h_estimates: Vec<f64>,
    /// Largest estimate over the two smallest radii.
    pub sup_estimate: f64,
}

pub fn dilatation_estimate(
    example: PlanarExample,
    z: [f64; 2],
    radii: &[f64],
    samples: usize,
    lambda: Option<f64>,
) -> Result<DilatationEstimate> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::invalid("radii", format!("{radii:?}"), "need positive radii"));
    }
    if samples < 4 {
        return Err(Error::invalid("samples", samples, "at least 4 per circle"));
    }
    let fz = planar_map(example, z, lambda)?;
    let source = example.source();
    let mut h = Vec::with_capacity(radii.len());
    for &r in radii {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..samples {
            let a = 2.0 * PI * k as f64 / samples as f64;
            let p = [z[0] + r * a.cos(), z[1] + r * a.sin()];
            if !source.contains(p) {
                return Err(Error::invalid("radii", r, &format!("circle about ({}, {}) leaves the {}", z[0], z[1], source.tag())));
            }
            let w = planar_map(example, p, lambda)?;
            let d = (w[0] - fz[0]).hypot(w[1] - fz[1]);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        h.push(hi / lo);
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|a, b| radii[*a].total_cmp(&radii[*b]));
    let sup_estimate = order.iter().take(2).map(|i| h[*i]).fold(0.0, f64::max);
    Ok(DilatationEstimate { point: z, radii: radii.to_vec(), h_estimates: h, sup_estimate })
}

/// `w ∈ [−a, a]² ∪ {|y| ≤ a|x|^{λ−1}}`.
pub fn in_shape(w: [f64; 2], a: f64, lambda: f64) -> bool {
    (w[0].abs() <= a && w[1].abs() <= a) || w[1].abs() <= a * w[0].abs().powf(lambda - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub lambda: f64,
    pub a: f64,
    pub samples: usize,
    pub all_pass: bool,
}

/// Images of `x ± i` with `|x|` log-spaced up to `x_max`, both signs.
pub fn stretched_boundary(lambda: f64, samples: usize, x_max: f64) -> Result<Vec<[f64; 2]>> {
    check_lambda(lambda)?;
    let per = (samples / 4).max(1);
    let top = (1.0 + x_max).ln();
    let mut out = Vec::with_capacity(4 * per);
    for k in 0..per {
        let x = (top * k as f64 / (per - 1).max(1) as f64).exp() - 1.0;
        for sx in [1.0, -1.0] {
            for y in [1.0, -1.0] {
                out.push(raw_map(PlanarExample::Stretch, [sx * x, y], lambda));
            }
        }
    }
    Ok(out)
}

/// Smallest `a` (to 1e−3, by bisection) with every sampled boundary image in
/// the shape; the strip boundary is sampled for `|x| ≤ 10⁶`.
pub fn shape_inclusion_fit(lambda: f64, samples: usize) -> Result<ShapeFit> {
    let pts = stretched_boundary(lambda, samples, 1e6)?;
    Ok(fit_shape(lambda, &pts))
}

pub fn fit_shape(lambda: f64, pts: &[[f64; 2]]) -> ShapeFit {
    let pass = |a: f64| pts.iter().all(|w| in_shape(*w, a, lambda));
    let mut hi = 1.0;
    while !pass(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if pass(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    ShapeFit { lambda, a: hi, samples: pts.len(), all_pass: pass(hi) }
}

/// Area of `Y ∩ B(0, r)` by the midpoint rule on dyadic cells of
/// `[−r, r]²`, refined to `max_depth` where the corner and centre
/// memberships disagree (and uniformly down to `min_depth`).
pub fn stretched_area(lambda: f64, r: f64, min_depth: u32, max_depth: u32) -> Result<f64> {
    check_lambda(lambda)?;
    if !(r > 0.0) {
        return Err(Error::invalid("r", r, "must be positive"));
    }
    let y = PlanarDomain::StretchedStrip { lambda };
    let inside = |p: [f64; 2]| p[0].hypot(p[1]) <= r && y.contains(p);
    let mut area = 0.0;
    let mut stack = vec![(-r, -r, 2.0 * r, 0u32)];
    while let Some((x0, y0, s, d)) = stack.pop() {
        let c = [x0 + 0.5 * s, y0 + 0.5 * s];
        let mc = inside(c);
        if d < max_depth {
            let corners = [[x0, y0], [x0 + s, y0], [x0, y0 + s], [x0 + s, y0 + s]];
            let mixed = corners.iter().any(|p| inside(*p) != mc);
            if d < min_depth || mixed {
                let h = 0.5 * s;
                for (dx, dy) in [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)] {
                    stack.push((x0 + dx, y0 + dy, h, d + 1));
                }
                continue;
            }
        }
        if mc {
            area += s * s;
        }
    }
    Ok(area)
}

/// Log–log fit of `L²(Y ∩ B(0, r))` against `r`.
pub fn stretched_strip_growth(lambda: f64, radii: &[f64]) -> Result<(GrowthFit, Vec<f64>)> {
    check_lambda(lambda)?;
    let areas = radii.iter().map(|&r| stretched_area(lambda, r, 6, 12)).collect::<Result<Vec<_>>>()?;
    Ok((fit_loglog(radii, &areas)?, areas))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropernessWitness {
    pub n: Vec<u32>,
    /// `|f(zₙ)|` for `zₙ = (−n, π/2)`.
    pub image_norms: Vec<f64>,
    /// The limit point `(0, 0)` is not in the target domain.
    pub limit_in_target: bool,
}

pub fn properness_witness(ns: &[u32]) -> Result<PropernessWitness> {
    let mut norms = Vec::with_capacity(ns.len());
    for &n in ns {
        let w = planar_map(PlanarExample::ExpStrip, [-(n as f64), PI / 2.0], None)?;
        norms.push(w[0].hypot(w[1]));
    }
    Ok(PropernessWitness {
        n: ns.to_vec(),
        image_norms: norms,
        limit_in_target: PlanarDomain::PuncturedHalfPlane.contains([0.0, 0.0]),
    })
}

//! Ball volumes on flow graphs and log–log growth fits.

use crate::error::{Error, Result};
use crate::geodesics::{build_graph, dijkstra, FlowGraph, GraphSpec, DEFAULT_MAX_NODES};
use crate::spaces::{Point3, SpaceModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    /// Least-squares slope of log V against log r.
    pub exponent: f64,
    /// Intercept of the same fit (log V at r = 1).
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// One CSV row: radius, volume, how it was computed, grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub radius: f64,
    pub volume: f64,
    pub method: String,
    pub h: f64,
}

/// Unweighted least squares of `log y` on `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<GrowthFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("radii", x.len(), "need at least two (radius, volume) pairs"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("volumes", format!("{y:?}"), "radii and volumes must be positive"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("radii", format!("{x:?}"), "radii must not all coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(GrowthFit {
        radii: x.to_vec(),
        volumes: y.to_vec(),
        exponent: slope,
        intercept,
        residual: (rss / n).sqrt(),
    })
}

fn check_coverage(g: &FlowGraph, r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid("r", r, "must be finite and nonnegative"));
    }
    if let Some(b) = &g.build {
        if r > b.radius_hint * (1.0 + 1e-12) {
            return Err(Error::Coverage(format!(
                "ball of radius {r} exceeds the graph's radius hint {}",
                b.radius_hint
            )));
        }
    }
    Ok(())
}

/// Measure of all nodes within graph distance `r` of each radius, from one
/// Dijkstra run.
pub fn ball_volumes(g: &FlowGraph, center: u32, radii: &[f64]) -> Result<Vec<f64>> {
    if center as usize >= g.node_count() {
        return Err(Error::invalid("center", center, "node id out of range"));
    }
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    for &r in radii {
        check_coverage(g, r)?;
    }
    let field = dijkstra(g, &[center], rmax);
    let mut pairs: Vec<(f64, f64)> = field
        .dist
        .iter()
        .zip(&g.node_measure)
        .filter(|(d, _)| d.is_finite())
        .map(|(d, m)| (*d, *m))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        // strictly a prefix sum; radii are few so a scan is fine
        let v: f64 = pairs.iter().take_while(|(d, _)| *d <= r).map(|(_, m)| m).sum();
        out.push(v);
    }
    Ok(out)
}

pub fn ball_volume(g: &FlowGraph, center: u32, r: f64) -> Result<f64> {
    Ok(ball_volumes(g, center, &[r])?[0])
}

pub fn growth_exponent(g: &FlowGraph, center: u32, radii: &[f64]) -> Result<GrowthFit> {
    if radii.len() < 3 {
        return Err(Error::invalid("radii", radii.len(), "at least three radii required"));
    }
    let v = ball_volumes(g, center, radii)?;
    fit_loglog(radii, &v)
}

/// Volumes from one graph per radius with step `r / cells_per_radius`, so the
/// resolution relative to the ball stays fixed.
pub fn scaled_ball_volumes(
    space: &SpaceModel,
    center: Point3,
    radii: &[f64],
    cells_per_radius: f64,
    max_nodes: usize,
) -> Result<Vec<VolumeRow>> {
    if !(cells_per_radius >= 2.0) {
        return Err(Error::invalid("cells_per_radius", cells_per_radius, "must be at least 2"));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let h = r / cells_per_radius;
        let mut spec = GraphSpec::for_ball(space.id, center, r, h)?;
        spec.max_nodes = max_nodes;
        let g = build_graph(&spec)?;
        let c = g.nearest_node(center)?;
        let v = ball_volume(&g, c, r)?;
        rows.push(VolumeRow { radius: r, volume: v, method: "graph-scaled".into(), h });
    }
    Ok(rows)
}

pub fn scaled_growth(
    space: &SpaceModel,
    center: Point3,
    radii: &[f64],
    cells_per_radius: f64,
) -> Result<(GrowthFit, Vec<VolumeRow>)> {
    if radii.len() < 3 {
        return Err(Error::invalid("radii", radii.len(), "at least three radii required"));
    }
    let rows = scaled_ball_volumes(space, center, radii, cells_per_radius, DEFAULT_MAX_NODES)?;
    let v: Vec<f64> = rows.iter().map(|r| r.volume).collect();
    Ok((fit_loglog(radii, &v)?, rows))
}

/// Smallest `C0` with `V(r) ≤ C0 r^N` on `[r_0, r_last]`, using monotonicity
/// of `V` between sampled radii: `C0 = max_i V(r_{i+1}) / r_i^N`.
pub fn volume_constant(radii: &[f64], volumes: &[f64], n: f64) -> f64 {
    let mut c: f64 = volumes.first().map(|v| v / radii[0].powf(n)).unwrap_or(0.0);
    for i in 0..radii.len().saturating_sub(1) {
        c = c.max(volumes[i + 1] / radii[i].powf(n));
    }
    c
}

/// Geometric sequence `r0, r0·q, …` of `k` radii.
pub fn geometric_radii(r0: f64, r1: f64, k: usize) -> Vec<f64> {
    if k < 2 {
        return vec![r0];
    }
    let q = (r1 / r0).powf(1.0 / (k - 1) as f64);
    (0..k).map(|i| r0 * q.powi(i as i32)).collect()
}

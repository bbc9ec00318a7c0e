//! Horizontal-flow graphs on regular coordinate grids, and Dijkstra.

use crate::error::{Error, Result};
use crate::spaces::{Point3, SpaceId, SpaceModel};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_NODES: usize = 4_000_000;
const NONE: u32 = u32::MAX;

/// Regular grid in the chart at the identity; node positions are the grid
/// points translated by `center` with the frame-preserving translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub center: Point3,
    pub spacing: [f64; 3],
    /// Grid indices run over `-half[a] ..= half[a]` on each axis.
    pub half: [i64; 3],
}

impl Lattice {
    fn dims(&self) -> [i64; 3] {
        [2 * self.half[0] + 1, 2 * self.half[1] + 1, 2 * self.half[2] + 1]
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        (d[0] * d[1] * d[2]) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ijk: [i64; 3]) -> Option<u32> {
        let d = self.dims();
        let mut id = 0i64;
        for a in 0..3 {
            let v = ijk[a] + self.half[a];
            if v < 0 || v >= d[a] {
                return None;
            }
            id = id * d[a] + v;
        }
        Some(id as u32)
    }

    pub fn coords(&self, id: u32) -> [i64; 3] {
        let d = self.dims();
        let mut r = id as i64;
        let k = r % d[2];
        r /= d[2];
        let j = r % d[1];
        let i = r / d[1];
        [i - self.half[0], j - self.half[1], k - self.half[2]]
    }

    pub fn chart_point(&self, ijk: [i64; 3]) -> Point3 {
        Point3::new(
            ijk[0] as f64 * self.spacing[0],
            ijk[1] as f64 * self.spacing[1],
            ijk[2] as f64 * self.spacing[2],
        )
    }

    fn round(&self, c: Point3) -> [i64; 3] {
        [
            (c.x / self.spacing[0]).round() as i64,
            (c.y / self.spacing[1]).round() as i64,
            (c.z / self.spacing[2]).round() as i64,
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Chart-coordinate half extents of the covered box (cells included).
    pub fn box_half_extents(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| (self.half[a] as f64 + 0.5) * self.spacing[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub h: f64,
    pub radius_hint: f64,
    pub stencil_order: u32,
    /// Number of flow directions (controls) in the stencil.
    pub stencil_size: usize,
    pub lattice: Lattice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    pub space: Option<SpaceId>,
    pub nodes: Vec<Point3>,
    pub node_measure: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    lengths: Vec<f64>,
    pub build: Option<BuildParams>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format_version: u32,
    space: Option<SpaceId>,
    nodes: Vec<[f64; 3]>,
    node_measure: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
    build: Option<BuildParams>,
}

impl FlowGraph {
    /// Builds an undirected graph; duplicate edges keep the smaller length.
    pub fn from_edges(
        nodes: Vec<Point3>,
        node_measure: Vec<f64>,
        edges: &[(u32, u32, f64)],
    ) -> Result<Self> {
        if nodes.len() != node_measure.len() {
            return Err(Error::invalid("node_measure", node_measure.len(), "one entry per node"));
        }
        if let Some(m) = node_measure.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("node_measure", m, "must be finite and nonnegative"));
        }
        let n = nodes.len();
        let mut sorted: Vec<(u32, u32, f64)> = Vec::with_capacity(edges.len());
        for &(a, b, l) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::invalid("edge", format!("({a}, {b})"), "endpoint out of range"));
            }
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid("edge length", l, "must be positive and finite"));
            }
            if a != b {
                sorted.push((a, b, l));
            }
        }
        sorted.sort_by_key(|e| e.0);
        let mut dir_off = vec![0usize; n + 1];
        for e in &sorted {
            dir_off[e.0 as usize + 1] += 1;
        }
        for i in 0..n {
            dir_off[i + 1] += dir_off[i];
        }
        let dir = sorted.into_iter().map(|(_, b, l)| (b, l)).collect();
        Ok(Self::assemble(None, nodes, node_measure, dir_off, dir, None))
    }

    /// Symmetrizes a directed CSR (`dir_off`, `dir`) into an undirected CSR.
    fn assemble(
        space: Option<SpaceId>,
        nodes: Vec<Point3>,
        node_measure: Vec<f64>,
        dir_off: Vec<usize>,
        dir: Vec<(u32, f64)>,
        build: Option<BuildParams>,
    ) -> Self {
        let n = nodes.len();
        // reversed copies via a counting pass, so order is deterministic
        let mut rev_off = vec![0usize; n + 1];
        for &(b, _) in &dir {
            rev_off[b as usize + 1] += 1;
        }
        for i in 0..n {
            rev_off[i + 1] += rev_off[i];
        }
        let mut fill = rev_off.clone();
        let mut rev = vec![(0u32, 0.0f64); dir.len()];
        for a in 0..n {
            for &(b, l) in &dir[dir_off[a]..dir_off[a + 1]] {
                rev[fill[b as usize]] = (a as u32, l);
                fill[b as usize] += 1;
            }
        }
        drop(fill);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets = Vec::with_capacity(dir.len());
        let mut lengths = Vec::with_capacity(dir.len());
        let mut all: Vec<(u32, f64)> = Vec::new();
        for a in 0..n {
            all.clear();
            all.extend_from_slice(&dir[dir_off[a]..dir_off[a + 1]]);
            all.extend_from_slice(&rev[rev_off[a]..rev_off[a + 1]]);
            all.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            let mut last = NONE;
            for &(b, l) in &all {
                if b != last {
                    targets.push(b);
                    lengths.push(l);
                    last = b;
                }
            }
            offsets.push(targets.len());
        }
        FlowGraph { space, nodes, node_measure, offsets, targets, lengths, build }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, a: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (s, e) = (self.offsets[a as usize], self.offsets[a as usize + 1]);
        self.targets[s..e].iter().copied().zip(self.lengths[s..e].iter().copied())
    }

    pub fn edge_length(&self, a: u32, b: u32) -> Option<f64> {
        self.neighbors(a).find(|(t, _)| *t == b).map(|(_, l)| l)
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for a in 0..self.node_count() as u32 {
            for (b, l) in self.neighbors(a) {
                if a < b {
                    out.push((a, b, l));
                }
            }
        }
        out
    }

    pub fn total_measure(&self) -> f64 {
        self.node_measure.iter().sum()
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.build.as_ref().map(|b| &b.lattice)
    }

    /// Grid node nearest to `q` (in the chart at the graph center), or the
    /// closest node by coordinates for graphs without a lattice.
    pub fn nearest_node(&self, q: Point3) -> Result<u32> {
        match (self.lattice(), self.space) {
            (Some(lat), Some(space)) => {
                let c = SpaceModel::new(space).recenter(lat.center, q);
                lat.index(lat.round(c)).ok_or_else(|| Error::Coverage(q.to_string()))
            }
            _ => self
                .nodes
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.coord_dist(q).total_cmp(&b.1.coord_dist(q)))
                .map(|(i, _)| i as u32)
                .ok_or_else(|| Error::Coverage(q.to_string())),
        }
    }

    /// Whether `q` lies inside the covered box.
    pub fn covers(&self, q: Point3) -> bool {
        self.nearest_node(q).is_ok()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = GraphFile {
            format_version: GRAPH_FORMAT_VERSION,
            space: self.space,
            nodes: self.nodes.iter().map(|p| p.to_array()).collect(),
            node_measure: self.node_measure.clone(),
            edges: self.edges(),
            build: self.build.clone(),
        };
        crate::output::write_atomic(path, serde_json::to_string(&file)?.as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: GraphFile = serde_json::from_str(&text)?;
        if file.format_version != GRAPH_FORMAT_VERSION {
            return Err(Error::invalid(
                "format_version",
                file.format_version,
                "unsupported graph file version",
            ));
        }
        let nodes = file.nodes.into_iter().map(Point3::from_array).collect();
        let mut g = FlowGraph::from_edges(nodes, file.node_measure, &file.edges)?;
        g.space = file.space;
        g.build = file.build;
        Ok(g)
    }
}

/// Grid and stencil choice for one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub space: SpaceId,
    pub center: Point3,
    /// Chart half extents that must be covered.
    pub half_extents: [f64; 3],
    pub spacing: [f64; 3],
    /// Flow step along the first frame field.
    pub h: f64,
    pub stencil_order: u32,
    pub max_nodes: usize,
    pub radius_hint: f64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive integer control vectors with max-norm at most `order`.
pub fn stencil(rank: usize, order: u32) -> Vec<[i64; 3]> {
    let k = order as i64;
    let mut out = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            let c_range = if rank == 3 { -k..=k } else { 0..=0 };
            for c in c_range {
                if a == 0 && b == 0 && c == 0 {
                    continue;
                }
                if gcd(gcd(a, b), c) == 1 {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

impl GraphSpec {
    /// Box and spacing from the coordinate-reachability bound of the space.
    pub fn for_ball(space: SpaceId, center: Point3, radius_hint: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", h, "must be positive"));
        }
        if !(radius_hint > 0.0) || !radius_hint.is_finite() {
            return Err(Error::invalid("radius_hint", radius_hint, "must be positive"));
        }
        let r = radius_hint;
        let (half_extents, spacing, order) = match space {
            SpaceId::Euclidean3 => ([r, r, r], [h, h, h], 3),
            // |t| ≤ 4·(area enclosed by a curve of length r with its chord) ≤ 2r²/π;
            // t spacing 2h² makes every stencil arc end exactly on a grid node
            SpaceId::Heisenberg => ([r, r, 2.0 * r * r / std::f64::consts::PI], [h, h, 2.0 * h * h], 1),
            SpaceId::RotoTranslation => {
                if r <= 1.0 && h < 1.0 {
                    // lateral displacement is second order: |y| ≤ ∫|u₁||θ| ≤ r²/2
                    ([r, r * r / 2.0, r], [h, h * h, h], 1)
                } else {
                    ([r, r, r], [h, h, h], 1)
                }
            }
        };
        Ok(GraphSpec {
            space,
            center,
            half_extents,
            spacing,
            h,
            stencil_order: order,
            max_nodes: DEFAULT_MAX_NODES,
            radius_hint,
        })
    }

    pub fn estimated_nodes(&self) -> usize {
        let cells = |a: usize| 2.0 * ((self.half_extents[a] / self.spacing[a]).ceil() + 2.0) + 1.0;
        (cells(0) * cells(1) * cells(2)).min(usize::MAX as f64) as usize
    }
}

/// Builds the flow graph described by `spec`.
pub fn build_graph(spec: &GraphSpec) -> Result<FlowGraph> {
    for a in 0..3 {
        if !(spec.spacing[a] > 0.0) || !(spec.half_extents[a] >= 0.0) {
            return Err(Error::invalid("spacing", format!("{:?}", spec.spacing), "must be positive"));
        }
    }
    let needed = spec.estimated_nodes();
    if needed > spec.max_nodes || needed > u32::MAX as usize / 2 {
        return Err(Error::ResourceCap { what: "graph nodes".into(), needed, cap: spec.max_nodes });
    }
    let space = SpaceModel::new(spec.space);
    // two extra cells so arcs from boundary nodes of the ball stay inside
    let half = [0, 1, 2].map(|a| (spec.half_extents[a] / spec.spacing[a]).ceil() as i64 + 2);
    let lattice = Lattice { center: spec.center, spacing: spec.spacing, half };
    let n = lattice.len();
    let controls = stencil(space.rank(), spec.stencil_order);
    let flows: Vec<([f64; 3], f64)> = controls
        .iter()
        .map(|c| {
            let v = [c[0] as f64, c[1] as f64, c[2] as f64];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            ([v[0] / norm, v[1] / norm, v[2] / norm], spec.h * norm)
        })
        .collect();

    let mut dir_off = Vec::with_capacity(n + 1);
    dir_off.push(0);
    let mut dir: Vec<(u32, f64)> = Vec::with_capacity(n * flows.len());
    let mut nodes = Vec::with_capacity(n);
    for id in 0..n as u32 {
        let ijk = lattice.coords(id);
        let chart = lattice.chart_point(ijk);
        nodes.push(space.translate(spec.center, chart));
        for (u, tau) in &flows {
            let end = space.flow_segment(chart, *u, *tau);
            let snapped = lattice.round(end);
            if let Some(b) = lattice.index(snapped) {
                if b != id {
                    let snap = end.coord_dist(lattice.chart_point(snapped));
                    dir.push((b, tau + snap));
                }
            }
        }
        dir_off.push(dir.len());
    }
    let measure = vec![lattice.cell_volume(); n];
    let build = BuildParams {
        h: spec.h,
        radius_hint: spec.radius_hint,
        stencil_order: spec.stencil_order,
        stencil_size: flows.len(),
        lattice,
    };
    Ok(FlowGraph::assemble(Some(spec.space), nodes, measure, dir_off, dir, Some(build)))
}

/// Graph covering the metric ball of radius `radius_hint` about `center`.
pub fn build_flow_graph(space: &SpaceModel, center: Point3, radius_hint: f64, h: f64) -> Result<FlowGraph> {
    build_graph(&GraphSpec::for_ball(space.id, center, radius_hint, h)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem(f64, u32);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by node id
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances and predecessor tree from a set of sources.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub dist: Vec<f64>,
    pub pred: Vec<u32>,
}

impl DistanceField {
    /// Node path from the nearest source to `t`; empty if unreachable.
    pub fn path_to(&self, t: u32) -> Vec<u32> {
        if !self.dist[t as usize].is_finite() {
            return Vec::new();
        }
        let mut path = vec![t];
        let mut cur = t;
        while self.pred[cur as usize] != NONE {
            cur = self.pred[cur as usize];
            path.push(cur);
        }
        path.reverse();
        path
    }
}

/// Multi-source Dijkstra with per-edge cost `cost(a, b, length)`; nodes beyond
/// `cutoff` are left at +∞.
pub fn dijkstra_with<F>(g: &FlowGraph, sources: &[u32], cutoff: f64, mut cost: F) -> DistanceField
where
    F: FnMut(u32, u32, f64) -> f64,
{
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![NONE; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s as usize] = 0.0;
        heap.push(HeapItem(0.0, s));
    }
    while let Some(HeapItem(d, a)) = heap.pop() {
        if d > dist[a as usize] {
            continue;
        }
        if d > cutoff {
            break;
        }
        for (b, l) in g.neighbors(a) {
            let nd = d + cost(a, b, l);
            if nd < dist[b as usize] {
                dist[b as usize] = nd;
                pred[b as usize] = a;
                heap.push(HeapItem(nd, b));
            }
        }
    }
    for (d, p) in dist.iter_mut().zip(pred.iter_mut()) {
        if *d > cutoff {
            *d = f64::INFINITY;
            *p = NONE;
        }
    }
    DistanceField { dist, pred }
}

pub fn dijkstra(g: &FlowGraph, sources: &[u32], cutoff: f64) -> DistanceField {
    dijkstra_with(g, sources, cutoff, |_, _, l| l)
}

/// Exact graph distances from `source` to each target (+∞ if unreachable).
pub fn graph_distance(g: &FlowGraph, source: u32, targets: &[u32]) -> Result<BTreeMap<u32, f64>> {
    if source as usize >= g.node_count() {
        return Err(Error::invalid("source", source, "node id out of range"));
    }
    let f = dijkstra(g, &[source], f64::INFINITY);
    let mut out = BTreeMap::new();
    for &t in targets {
        let d = f.dist.get(t as usize).copied().unwrap_or(f64::INFINITY);
        out.insert(t, d);
    }
    Ok(out)
}

/// Lower bound on the graph diameter of a node set by a double sweep.
pub fn set_diameter(g: &FlowGraph, set: &[u32]) -> f64 {
    if set.len() < 2 {
        return 0.0;
    }
    let farthest = |from: u32| {
        let f = dijkstra(g, &[from], f64::INFINITY);
        set.iter()
            .map(|&s| (s, f.dist[s as usize]))
            .filter(|(_, d)| d.is_finite())
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap_or((from, 0.0))
    };
    let (a, _) = farthest(set[0]);
    let (_, d) = farthest(a);
    d
}

/// Graph distance between two node sets.
pub fn set_distance(g: &FlowGraph, a: &[u32], b: &[u32]) -> f64 {
    let f = dijkstra(g, a, f64::INFINITY);
    b.iter().map(|&t| f.dist[t as usize]).fold(f64::INFINITY, f64::min)
}

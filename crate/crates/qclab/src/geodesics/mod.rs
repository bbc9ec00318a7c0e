//! Carnot–Carathéodory distance estimates: direct trajectory optimization and
//! shortest paths on horizontal-flow graphs.

mod direct;
mod graph;

pub use direct::{cc_distance_direct, explicit_upper_bound, DirectOptions};
pub use graph::{
    build_flow_graph, build_graph, dijkstra, dijkstra_with, graph_distance, set_diameter,
    set_distance, stencil, BuildParams, DistanceField, FlowGraph, GraphSpec, Lattice,
    DEFAULT_MAX_NODES, GRAPH_FORMAT_VERSION,
};

use crate::error::Result;
use crate::spaces::{ControlPath, Point3, SpaceModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    Controls(ControlPath),
    NodePath(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    pub method: Method,
    pub certificate: Certificate,
    /// Difference to the other method when both were run.
    pub gap_hint: Option<f64>,
    /// Coordinate distance from the certificate endpoint to the target.
    pub endpoint_error: f64,
    /// Best feasible value after each penalty round (direct method only).
    pub round_values: Vec<f64>,
}

/// Graph estimate of `d(p, q)` on a graph centered at `p` whose radius comes
/// from an explicit horizontal path, so the target is always covered.
pub fn cc_distance_graph(space: &SpaceModel, p: Point3, q: Point3, h: f64) -> Result<DistanceResult> {
    let ub = explicit_upper_bound(space, space.recenter(p, q));
    let radius = (1.05 * ub).max(2.0 * h);
    let g = build_flow_graph(space, p, radius, h)?;
    let s = g.nearest_node(p)?;
    let t = g.nearest_node(q)?;
    let field = dijkstra(&g, &[s], radius * 1.5);
    Ok(DistanceResult {
        value: field.dist[t as usize],
        method: Method::Graph,
        certificate: Certificate::NodePath(field.path_to(t)),
        gap_hint: None,
        endpoint_error: g.nodes[t as usize].coord_dist(q),
        round_values: Vec::new(),
    })
}

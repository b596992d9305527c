//! Graph-based constraint placement of object instances on the scene floor,
//! plus an independent checker for the result.

pub mod regions;
pub mod relations;
mod solver;

use std::collections::HashMap;

use indexmap::IndexMap;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{yaw_quat, AffineTransform, Box3};
use crate::spec::{ConstraintGraph, Edge, Relation, SceneDims};

pub use regions::{candidate_positions, candidate_positions_with, classify, CandidateSet, RegionParams};
pub use relations::{aabb_overlap, aabb_overlap_3d, holds, ObjectGeom, RelationParams};
pub use solver::{place_additional, select_anchor_object, solve_layout, solve_layout_with};

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("constraint graph has no objects")]
    EmptyGraph,
    #[error("grid spacing must be > 0, got {0}")]
    BadGrid(f64),
    #[error("CORNER region does not exist in an outdoor scene")]
    CornerOutdoor,
    #[error("no model bounds for instance `{0}`")]
    MissingAsset(String),
    #[error("model extent along axis {axis} is zero")]
    ZeroExtent { axis: usize },
    #[error("no feasible placement for `{0}`")]
    Infeasible(String),
    #[error("unknown instance `{0}`")]
    UnknownNode(String),
    #[error("layout: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub grid: f64,
    /// Inflation applied to every footprint before the overlap test, meters.
    pub clearance: f64,
    pub regions: RegionParams,
    pub relations: RelationParams,
    /// Option evaluations allowed in the exhaustive repair search.
    pub search_budget: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            grid: 0.25,
            clearance: 0.05,
            regions: RegionParams::default(),
            relations: RelationParams::default(),
            search_budget: 2_000_000,
        }
    }
}

/// Uniform scale, heading and translation of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub s: f64,
    pub t: [f64; 3],
    pub yaw_radians: f64,
}

impl Placement {
    pub fn affine(&self) -> AffineTransform {
        AffineTransform {
            s: self.s,
            r: yaw_quat(self.yaw_radians),
            t: Vector3::from(self.t),
        }
    }
}

/// Footprint of `model` under `placement`.
pub fn placement_geom(model: &Box3, placement: &Placement) -> ObjectGeom {
    ObjectGeom::new(model, &placement.affine(), placement.yaw_radians)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub scene: SceneDims,
    pub seed: u64,
    pub placements: IndexMap<String, Placement>,
    /// Relations the solver could not satisfy.
    #[serde(default)]
    pub deferred: Vec<Edge>,
}

impl Layout {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LayoutError> {
        let layout: Layout =
            serde_json::from_str(text).map_err(|e| LayoutError::Format(e.to_string()))?;
        layout
            .scene
            .validated()
            .map_err(|e| LayoutError::Format(e.to_string()))?;
        for (id, p) in &layout.placements {
            if !(p.s > 0.0) || !p.s.is_finite() {
                return Err(LayoutError::Format(format!("`{id}`: scale must be > 0")));
            }
        }
        Ok(layout)
    }
}

/// `min_i real_size[i] / model_extent[i]`: the largest uniform scale that
/// keeps the model within the declared size on every axis.
pub fn scaling_factor(real_size: [f64; 3], model_box: &Box3) -> Result<f64, LayoutError> {
    let e = model_box.extent();
    let mut s = f64::INFINITY;
    for axis in 0..3 {
        if !(e[axis] > 0.0) {
            return Err(LayoutError::ZeroExtent { axis });
        }
        s = s.min(real_size[axis] / e[axis]);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    Collision,
    Relation,
    Anchor,
    Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub instances: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutReport {
    pub violations: Vec<Violation>,
}

impl LayoutReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    /// Everything except relation violations.
    pub fn hard(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.kind != ViolationKind::Relation)
    }
}

/// Whether the world footprint stays inside the scene.
pub fn in_bounds(geom: &ObjectGeom, scene: &SceneDims) -> bool {
    let b = &geom.bounds;
    match *scene {
        SceneDims::Indoor {
            width,
            length,
            height,
        } => {
            b.min.x >= -width / 2.0 - EPS
                && b.max.x <= width / 2.0 + EPS
                && b.min.y >= -length / 2.0 - EPS
                && b.max.y <= length / 2.0 + EPS
                && b.min.z >= -EPS
                && b.max.z <= height + EPS
        }
        SceneDims::Outdoor { radius } => {
            b.min.z >= -EPS
                && [
                    (b.min.x, b.min.y),
                    (b.max.x, b.min.y),
                    (b.min.x, b.max.y),
                    (b.max.x, b.max.y),
                ]
                .iter()
                .all(|&(x, y)| Vector2::new(x, y).norm() <= radius + EPS)
        }
    }
}

/// Pairs joined by an OVER or UNDER edge may overlap in plan view.
pub fn vertical_pair(graph: &ConstraintGraph, a: &str, b: &str) -> bool {
    graph.edges.iter().any(|e| {
        e.relation.is_vertical()
            && ((e.subject == a && e.object == b) || (e.subject == b && e.object == a))
    })
}

pub fn verify_layout(
    layout: &Layout,
    graph: &ConstraintGraph,
    assets: &HashMap<String, Box3>,
) -> LayoutReport {
    verify_layout_with(layout, graph, assets, &LayoutConfig::default())
}

pub fn verify_layout_with(
    layout: &Layout,
    graph: &ConstraintGraph,
    assets: &HashMap<String, Box3>,
    cfg: &LayoutConfig,
) -> LayoutReport {
    let mut report = LayoutReport::default();
    let mut geoms: HashMap<&str, ObjectGeom> = HashMap::new();
    for node in &graph.nodes {
        let (Some(p), Some(model)) = (layout.placements.get(&node.id), assets.get(&node.id)) else {
            report.violations.push(Violation {
                kind: ViolationKind::Bounds,
                instances: vec![node.id.clone()],
                detail: "missing placement or model bounds".into(),
            });
            continue;
        };
        let g = placement_geom(model, p);
        let region = classify(&g.center, &layout.scene, &cfg.regions);
        if region != node.anchor {
            report.violations.push(Violation {
                kind: ViolationKind::Anchor,
                instances: vec![node.id.clone()],
                detail: format!(
                    "center ({:.3}, {:.3}) is in {region}, expected {}",
                    g.center.x, g.center.y, node.anchor
                ),
            });
        }
        if !in_bounds(&g, &layout.scene) {
            report.violations.push(Violation {
                kind: ViolationKind::Bounds,
                instances: vec![node.id.clone()],
                detail: format!(
                    "bounds [{:.3}, {:.3}, {:.3}]..[{:.3}, {:.3}, {:.3}] leave the scene",
                    g.bounds.min.x, g.bounds.min.y, g.bounds.min.z, g.bounds.max.x, g.bounds.max.y,
                    g.bounds.max.z
                ),
            });
        }
        geoms.insert(node.id.as_str(), g);
    }
    for (i, a) in graph.nodes.iter().enumerate() {
        for b in &graph.nodes[i + 1..] {
            let (Some(ga), Some(gb)) = (geoms.get(a.id.as_str()), geoms.get(b.id.as_str())) else {
                continue;
            };
            if vertical_pair(graph, &a.id, &b.id) {
                continue;
            }
            if aabb_overlap(&ga.bounds, &gb.bounds, cfg.clearance) {
                report.violations.push(Violation {
                    kind: ViolationKind::Collision,
                    instances: vec![a.id.clone(), b.id.clone()],
                    detail: format!("footprints within {} m clearance", cfg.clearance),
                });
            }
        }
    }
    for e in &graph.edges {
        let (Some(gs), Some(go)) = (geoms.get(e.subject.as_str()), geoms.get(e.object.as_str())) else {
            continue;
        };
        if !holds(e.relation, gs, go, &cfg.relations) {
            report.violations.push(Violation {
                kind: ViolationKind::Relation,
                instances: vec![e.subject.clone(), e.object.clone()],
                detail: format!("`{}` is not {} `{}`", e.subject, relation_phrase(e.relation), e.object),
            });
        }
    }
    report
}

fn relation_phrase(r: Relation) -> &'static str {
    match r {
        Relation::Left => "left of",
        Relation::Right => "right of",
        Relation::Front => "in front of",
        Relation::Behind => "behind",
        Relation::Over => "over",
        Relation::Under => "under",
        Relation::Next => "next to",
        Relation::Opposite => "opposite",
    }
}

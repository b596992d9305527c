//! Helpers shared by the layout tests and the acceptance run.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use splatscene::gaussian::Box3;
use splatscene::layout::{candidate_positions, verify_layout, Layout, Placement};
use splatscene::spec::{dedupe_edges, AnchorRegion, ConstraintGraph, Edge, ObjectNode, Relation, SceneDims};

/// Model boxes equal to the declared sizes, so the scale factor is 1.
pub fn exact_assets(g: &ConstraintGraph) -> HashMap<String, Box3> {
    g.nodes
        .iter()
        .map(|n| (n.id.clone(), Box3::footprint_box(Vector3::from(n.size))))
        .collect()
}

/// Grid spacing that yields a 5 × 5 lattice over the room.
pub fn coarse_grid(g: &ConstraintGraph) -> f64 {
    match g.scene {
        SceneDims::Indoor { width, length, .. } => width.max(length) / 4.0,
        SceneDims::Outdoor { radius } => radius / 2.0,
    }
}

// Exhaustive reference search over grid candidates and a fixed yaw set.

fn facing(anchor: AnchorRegion, p: Vector2<f64>, scene: &SceneDims) -> Option<f64> {
    let toward = |d: Vector2<f64>| (-d.x).atan2(d.y);
    match (anchor, scene) {
        (AnchorRegion::Corner, _) | (AnchorRegion::Side, SceneDims::Outdoor { .. }) => {
            (p.norm() > 0.0).then(|| toward(-p))
        }
        (AnchorRegion::Side, SceneDims::Indoor { width, length, .. }) => {
            let gaps = [
                (p.x + width / 2.0, Vector2::new(1.0, 0.0)),
                (width / 2.0 - p.x, Vector2::new(-1.0, 0.0)),
                (p.y + length / 2.0, Vector2::new(0.0, 1.0)),
                (length / 2.0 - p.y, Vector2::new(0.0, -1.0)),
            ];
            let n = gaps.iter().min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()).unwrap().1;
            Some(toward(n))
        }
        _ => None,
    }
}

fn oracle_options(node: &ObjectNode, model: &Box3, scene: &SceneDims, grid: f64) -> Vec<Placement> {
    let cands = candidate_positions(node.anchor, scene, grid).unwrap();
    let mut out = Vec::new();
    for p in cands.positions {
        let mut yaws = vec![0.0, FRAC_PI_2, PI, -FRAC_PI_2];
        if p.norm() > 0.0 {
            yaws.push((p.x).atan2(-p.y));
        }
        yaws.extend(facing(node.anchor, p, scene));
        for yaw in yaws {
            let s = {
                let e = model.extent();
                (0..3).map(|i| node.size[i] / e[i]).fold(f64::INFINITY, f64::min)
            };
            let c = model.center() * s;
            let (sn, cs) = yaw.sin_cos();
            let rc = Vector2::new(cs * c.x - sn * c.y, sn * c.x + cs * c.y);
            out.push(Placement {
                s,
                t: [p.x - rc.x, p.y - rc.y, -s * model.min.z],
                yaw_radians: yaw,
            });
        }
    }
    out
}

fn sub_graph(g: &ConstraintGraph, k: usize) -> ConstraintGraph {
    let nodes = g.nodes[..k].to_vec();
    let ids: Vec<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
    let edges = g
        .edges
        .iter()
        .filter(|e| ids.contains(&e.subject.as_str()) && ids.contains(&e.object.as_str()))
        .cloned()
        .collect();
    ConstraintGraph { scene: g.scene, nodes, edges }
}

pub fn oracle_feasible(g: &ConstraintGraph, assets: &HashMap<String, Box3>, grid: f64) -> bool {
    let options: Vec<Vec<Placement>> = g
        .nodes
        .iter()
        .map(|n| oracle_options(n, &assets[&n.id], &g.scene, grid))
        .collect();
    let subs: Vec<ConstraintGraph> = (1..=g.nodes.len()).map(|k| sub_graph(g, k)).collect();
    fn rec(
        k: usize,
        g: &ConstraintGraph,
        subs: &[ConstraintGraph],
        options: &[Vec<Placement>],
        assets: &HashMap<String, Box3>,
        layout: &mut Layout,
    ) -> bool {
        if k == g.nodes.len() {
            return true;
        }
        for p in &options[k] {
            layout.placements.insert(g.nodes[k].id.clone(), *p);
            if verify_layout(layout, &subs[k], assets).hard().count() == 0
                && rec(k + 1, g, subs, options, assets, layout)
            {
                return true;
            }
            layout.placements.shift_remove(&g.nodes[k].id);
        }
        false
    }
    let mut layout = Layout {
        scene: g.scene,
        seed: 0,
        placements: Default::default(),
        deferred: vec![],
    };
    rec(0, g, &subs, &options, assets, &mut layout)
}

/// Micro-instance from small integer choices: 1–3 objects, up to 2 edges.
pub fn build_micro(w: f64, l: f64, nodes: Vec<(AnchorRegion, f64, f64, f64)>, edges: Vec<(usize, usize, Relation)>) -> ConstraintGraph {
    let nodes: Vec<ObjectNode> = nodes
        .into_iter()
        .enumerate()
        .map(|(i, (anchor, x, y, z))| ObjectNode {
            id: format!("o{}", i + 1),
            category: "o".into(),
            size: [x, y, z],
            description: "d".into(),
            anchor,
        })
        .collect();
    let n = nodes.len();
    let mut es: Vec<Edge> = Vec::new();
    for (a, b, r) in edges {
        let (a, b) = (a % n, b % n);
        if a == b {
            continue;
        }
        let mut trial = es.clone();
        trial.push(Edge {
            subject: nodes[a].id.clone(),
            object: nodes[b].id.clone(),
            relation: r,
        });
        if let Ok(ok) = dedupe_edges(trial) {
            es = ok;
        }
    }
    ConstraintGraph {
        scene: SceneDims::Indoor { width: w, length: l, height: 3.0 },
        nodes,
        edges: es,
    }
}

pub const MICRO_ANCHORS: [AnchorRegion; 4] = [AnchorRegion::Center, AnchorRegion::Side, AnchorRegion::Corner, AnchorRegion::Others];
pub const MICRO_RELATIONS: [Relation; 7] = [
    Relation::Left,
    Relation::Right,
    Relation::Front,
    Relation::Behind,
    Relation::Next,
    Relation::Opposite,
    Relation::Over,
];

pub fn random_micro(rng: &mut impl Rng) -> ConstraintGraph {
    let n = rng.random_range(1..=3);
    let nodes = (0..n)
        .map(|_| {
            (
                MICRO_ANCHORS[rng.random_range(0..4)],
                rng.random_range(0.2..1.6),
                rng.random_range(0.2..1.6),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let m = rng.random_range(0..3);
    let edges = (0..m)
        .map(|_| (rng.random_range(0..3), rng.random_range(0..3), MICRO_RELATIONS[rng.random_range(0..7)]))
        .collect();
    build_micro(rng.random_range(2.0..4.0), rng.random_range(2.0..4.0), nodes, edges)
}

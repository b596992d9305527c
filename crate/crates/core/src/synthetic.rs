//! Stand-in assets and generated constraint graphs for tests, benchmarks and
//! offline pipelines.

use nalgebra::Vector3;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{Gaussian, GaussianCloud};
use crate::spec::{dedupe_edges, AnchorRegion, ConstraintGraph, Edge, ObjectNode, Relation, SceneDims};

/// Gaussians covering the surface of a box of real-world `size`, normalized
/// so the longest side is 1 and centered on the origin in x/y with the base
/// at z = 0. `per_unit` is the sample count along a unit edge. Centers are
/// inset by 3σ so the 3σ bounds of the cloud are exactly the normalized box.
pub fn box_cloud(label: &str, size: [f64; 3], per_unit: usize) -> GaussianCloud {
    let longest = size.iter().cloned().fold(f64::MIN, f64::max);
    let e = Vector3::new(size[0], size[1], size[2]) / longest;
    let per_unit = per_unit.max(2);
    let counts = e.map(|v| ((v * per_unit as f64).ceil() as usize).max(2));
    let sigma = (0.25 / per_unit as f64).min(e.min() / 12.0);
    let color = label_color(label);
    let inset = 3.0 * sigma;
    let lo = Vector3::new(-e.x / 2.0 + inset, -e.y / 2.0 + inset, inset);
    let e = e.add_scalar(-2.0 * inset);
    let mut out = Vec::new();
    let coord = |axis: usize, k: usize| lo[axis] + e[axis] * k as f64 / (counts[axis] - 1) as f64;
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, counts[axis] - 1] {
            for i in 0..counts[u] {
                for j in 0..counts[v] {
                    // Skip points already emitted by a lower-numbered face.
                    let on_lower = |a: usize, k: usize| a < axis && (k == 0 || k == counts[a] - 1);
                    if on_lower(u, i) || on_lower(v, j) {
                        continue;
                    }
                    let mut p = Vector3::zeros();
                    p[axis] = coord(axis, side);
                    p[u] = coord(u, i);
                    p[v] = coord(v, j);
                    let mut g = Gaussian::isotropic(p, sigma, 0.9);
                    g.sh_dc = color;
                    out.push(g);
                }
            }
        }
    }
    GaussianCloud::new(label, out)
}

/// Deterministic per-label DC color (SH units).
fn label_color(label: &str) -> [f64; 3] {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    [0, 1, 2].map(|k| ((h >> (k * 16)) & 0xffff) as f64 / 65535.0 * 1.6 - 0.8)
}

/// A random layout problem with `n` objects that has room to spare.
pub fn random_graph(seed: u64, n: usize, outdoor: bool) -> ConstraintGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = if outdoor {
        SceneDims::Outdoor {
            radius: 8.0 + 0.8 * n as f64 + rng.random_range(0.0..2.0),
        }
    } else {
        let base = 5.0 + 0.6 * n as f64;
        SceneDims::Indoor {
            width: base + rng.random_range(0.0..2.0),
            length: base + rng.random_range(0.0..2.0),
            height: 3.0,
        }
    };
    let regions: &[AnchorRegion] = if outdoor {
        &[AnchorRegion::Center, AnchorRegion::Side, AnchorRegion::Others]
    } else {
        &AnchorRegion::ALL
    };
    let mut nodes = Vec::with_capacity(n);
    let mut centers = 0;
    let mut corners = 0;
    for k in 0..n {
        let mut anchor = *regions.choose(&mut rng).expect("nonempty");
        if (anchor == AnchorRegion::Center && centers >= 2) || (anchor == AnchorRegion::Corner && corners >= 4) {
            anchor = AnchorRegion::Others;
        }
        centers += usize::from(anchor == AnchorRegion::Center);
        corners += usize::from(anchor == AnchorRegion::Corner);
        let max_xy = if anchor == AnchorRegion::Corner { 0.6 } else { 1.6 };
        let size = [
            rng.random_range(0.3..max_xy),
            rng.random_range(0.3..max_xy),
            rng.random_range(0.2..1.8),
        ];
        nodes.push(ObjectNode {
            id: format!("obj{}", k + 1),
            category: format!("obj{}", k + 1),
            size,
            description: format!("A DSLR photo of object {}", k + 1),
            anchor,
        });
    }
    let rels = [
        Relation::Left,
        Relation::Right,
        Relation::Front,
        Relation::Behind,
        Relation::Next,
        Relation::Opposite,
    ];
    let mut edges: Vec<Edge> = Vec::new();
    for k in 1..n {
        if !rng.random_bool(0.7) {
            continue;
        }
        let j = rng.random_range(0..k);
        let e = Edge {
            subject: nodes[k].id.clone(),
            object: nodes[j].id.clone(),
            relation: *rels.choose(&mut rng).expect("nonempty"),
        };
        let mut trial = edges.clone();
        trial.push(e);
        if let Ok(ok) = dedupe_edges(trial) {
            edges = ok;
        }
    }
    ConstraintGraph { scene, nodes, edges }
}

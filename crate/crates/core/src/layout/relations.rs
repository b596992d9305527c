//! Geometric meaning of the pairwise relations and the footprint overlap
//! test. Solver and verifier both go through these functions.

use std::f64::consts::{PI, TAU};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::gaussian::{AffineTransform, Box3};
use crate::spec::Relation;

/// Tolerance for "resting on" contacts along z.
pub const CONTACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationParams {
    /// Directional relations need the dominant local axis to be at least
    /// this many times the other one.
    pub dominance: f64,
    /// Extra slack in meters for NEXT beyond touching half-diagonals.
    pub next_margin: f64,
    /// Allowed deviation from antiparallel facing for OPPOSITE, radians.
    pub opposite_tol: f64,
}

impl Default for RelationParams {
    fn default() -> Self {
        Self {
            dominance: 2.0,
            next_margin: 0.5,
            opposite_tol: 15f64.to_radians(),
        }
    }
}

/// World-space footprint of a placed object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectGeom {
    pub center: Vector2<f64>,
    pub yaw: f64,
    pub bounds: Box3,
    /// Half the diagonal of the scaled model footprint (yaw independent).
    pub half_diag: f64,
}

impl ObjectGeom {
    pub fn new(model: &Box3, affine: &AffineTransform, yaw: f64) -> Self {
        let bounds = model.transformed(affine);
        let c = affine.apply_point(&model.center());
        let e = model.extent() * affine.s;
        Self {
            center: Vector2::new(c.x, c.y),
            yaw,
            bounds,
            half_diag: 0.5 * e.x.hypot(e.y),
        }
    }
}

/// Local +y of an object with the given yaw, in world coordinates.
pub fn forward(yaw: f64) -> Vector2<f64> {
    Vector2::new(-yaw.sin(), yaw.cos())
}

/// Local +x of an object with the given yaw, in world coordinates.
pub fn right(yaw: f64) -> Vector2<f64> {
    Vector2::new(yaw.cos(), yaw.sin())
}

/// Angle wrapped into `[0, 2π)`.
pub fn wrap_tau(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Angle wrapped into `(−π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = wrap_tau(a);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Strict interior overlap of the x/y extents after inflating both boxes.
pub fn aabb_overlap(a: &Box3, b: &Box3, clearance: f64) -> bool {
    (0..2).all(|i| axis_overlap(a, b, i, clearance))
}

/// As [`aabb_overlap`], also requiring z overlap when both z ranges are finite.
pub fn aabb_overlap_3d(a: &Box3, b: &Box3, clearance: f64) -> bool {
    let z_finite = [a.min.z, a.max.z, b.min.z, b.max.z].iter().all(|v| v.is_finite());
    aabb_overlap(a, b, clearance) && (!z_finite || axis_overlap(a, b, 2, clearance))
}

fn axis_overlap(a: &Box3, b: &Box3, i: usize, c: f64) -> bool {
    a.min[i] - c < b.max[i] + c && b.min[i] - c < a.max[i] + c
}

/// Subject offset expressed in the reference object's (right, forward) frame.
pub fn local_offset(subject: &ObjectGeom, reference: &ObjectGeom) -> Vector2<f64> {
    let d = subject.center - reference.center;
    Vector2::new(d.dot(&right(reference.yaw)), d.dot(&forward(reference.yaw)))
}

/// Whether `subject relation reference` holds.
pub fn holds(
    relation: Relation,
    subject: &ObjectGeom,
    reference: &ObjectGeom,
    params: &RelationParams,
) -> bool {
    let l = local_offset(subject, reference);
    let k = params.dominance;
    match relation {
        Relation::Front => l.y > 0.0 && l.y >= k * l.x.abs(),
        Relation::Behind => l.y < 0.0 && -l.y >= k * l.x.abs(),
        Relation::Right => l.x > 0.0 && l.x >= k * l.y.abs(),
        Relation::Left => l.x < 0.0 && -l.x >= k * l.y.abs(),
        Relation::Next => {
            (subject.center - reference.center).norm()
                <= subject.half_diag + reference.half_diag + params.next_margin
        }
        Relation::Opposite => {
            let f = forward(reference.yaw);
            let across = subject.center.dot(&f) * reference.center.dot(&f) < 0.0;
            let dyaw = wrap_tau(subject.yaw - reference.yaw);
            across && (dyaw - PI).abs() <= params.opposite_tol
        }
        Relation::Over => {
            aabb_overlap(&subject.bounds, &reference.bounds, 0.0)
                && (subject.bounds.min.z - reference.bounds.max.z).abs() <= CONTACT_TOL
        }
        Relation::Under => {
            aabb_overlap(&subject.bounds, &reference.bounds, 0.0)
                && (subject.bounds.max.z - reference.bounds.min.z).abs() <= CONTACT_TOL
        }
    }
}

/// World-space box from explicit bounds, for tests and hand-built layouts.
pub fn geom_at(center: [f64; 2], yaw: f64, half_extent: [f64; 3], z0: f64) -> ObjectGeom {
    let model = Box3 {
        min: Vector3::new(-half_extent[0], -half_extent[1], 0.0),
        max: Vector3::new(half_extent[0], half_extent[1], 2.0 * half_extent[2]),
    };
    let affine = AffineTransform::from_yaw(1.0, yaw, Vector3::new(center[0], center[1], z0))
        .expect("unit scale");
    ObjectGeom::new(&model, &affine, yaw)
}

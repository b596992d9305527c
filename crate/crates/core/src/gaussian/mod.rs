//! Gaussian splat data model and the affine/geometric math used to place
//! object clouds into a shared world frame.
//!
//! Covariance is always kept factored as `(rotation, scale)`; the full matrix
//! is only materialized inside [`evaluate_density`].

mod ply;
pub mod sh;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ply::{load_ply, save_ply, PlyError, PLY_PROPERTIES};

/// Number of higher-order SH coefficients per color channel (degree 3).
pub const SH_REST_PER_CHANNEL: usize = 15;
/// Total higher-order SH coefficients, stored channel-major like the PLY file.
pub const SH_REST_LEN: usize = 3 * SH_REST_PER_CHANNEL;

/// Tolerance on quaternion unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    #[error("gaussian {index}: rotation norm {norm} is not unit")]
    NonUnitRotation { index: usize, norm: f64 },
    #[error("gaussian {index}: scale component {axis} = {value} must be > 0")]
    NonPositiveScale { index: usize, axis: usize, value: f64 },
    #[error("gaussian {index}: opacity {value} outside [0, 1]")]
    OpacityOutOfRange { index: usize, value: f64 },
    #[error("affine scale {0} must be > 0")]
    NonPositiveAffineScale(f64),
    #[error("cannot compute the bounds of an empty cloud")]
    EmptyCloud,
    #[error("box min {min:?} exceeds max {max:?}")]
    InvertedBox { min: [f64; 3], max: [f64; 3] },
}

/// A single anisotropic 3D Gaussian primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Per-axis standard deviations in meters.
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub sh_dc: [f64; 3],
    /// Channel-major: `sh_rest[c * 15 + k]` is coefficient `k` of channel `c`.
    pub sh_rest: [f64; SH_REST_LEN],
}

impl Gaussian {
    /// Isotropic Gaussian with identity rotation and zero SH.
    pub fn isotropic(mean: Vector3<f64>, sigma: f64, opacity: f64) -> Self {
        Self {
            mean,
            rotation: UnitQuaternion::identity(),
            scale: Vector3::repeat(sigma),
            opacity,
            sh_dc: [0.0; 3],
            sh_rest: [0.0; SH_REST_LEN],
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), GaussianError> {
        let norm = self.rotation.quaternion().norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL || !norm.is_finite() {
            return Err(GaussianError::NonUnitRotation { index, norm });
        }
        for axis in 0..3 {
            let value = self.scale[axis];
            if !(value > 0.0) || !value.is_finite() {
                return Err(GaussianError::NonPositiveScale { index, axis, value });
            }
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(GaussianError::OpacityOutOfRange {
                index,
                value: self.opacity,
            });
        }
        Ok(())
    }

    /// `Σ = R · diag(scale²) · Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let s2 = Matrix3::from_diagonal(&self.scale.component_mul(&self.scale));
        r * s2 * r.transpose()
    }

    /// Half extents of the axis-aligned box enclosing the one-sigma ellipsoid.
    pub fn axis_extent(&self) -> Vector3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        Vector3::from_fn(|i, _| {
            (0..3)
                .map(|j| (r[(i, j)] * self.scale[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
    }
}

/// Builds a unit quaternion from `(w, x, y, z)`, keeping the components
/// untouched when they are already unit within [`UNIT_NORM_TOL`].
pub fn quat_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion<f64> {
    let q = Quaternion::new(w, x, y, z);
    let norm = q.norm();
    if (norm - 1.0).abs() <= UNIT_NORM_TOL {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::from_quaternion(q)
    }
}

/// Rotation about +z by `yaw` radians.
pub fn yaw_quat(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Heading of a rotation: the angle of the rotated +x axis in the floor plane.
pub fn yaw_of(r: &UnitQuaternion<f64>) -> f64 {
    let x = r * Vector3::x();
    x.y.atan2(x.x)
}

/// An ordered set of Gaussians with a text label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub label: String,
}

impl GaussianCloud {
    pub fn new(label: impl Into<String>, gaussians: Vec<Gaussian>) -> Self {
        Self {
            gaussians,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<(), GaussianError> {
        self.gaussians
            .iter()
            .enumerate()
            .try_for_each(|(i, g)| g.validate(i))
    }
}

/// Uniform scale, rotation and translation: `x ↦ r·(s·x) + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub s: f64,
    pub r: UnitQuaternion<f64>,
    pub t: Vector3<f64>,
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            s: 1.0,
            r: UnitQuaternion::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn new(s: f64, r: UnitQuaternion<f64>, t: Vector3<f64>) -> Result<Self, GaussianError> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(GaussianError::NonPositiveAffineScale(s));
        }
        Ok(Self { s, r, t })
    }

    pub fn from_yaw(s: f64, yaw: f64, t: Vector3<f64>) -> Result<Self, GaussianError> {
        Self::new(s, yaw_quat(yaw), t)
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r * (p * self.s) + self.t
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        AffineTransform {
            s: self.s * inner.s,
            r: self.r * inner.r,
            t: self.r * (inner.t * self.s) + self.t,
        }
    }

    pub fn yaw(&self) -> f64 {
        yaw_of(&self.r)
    }
}

/// How higher SH bands are treated when a cloud is rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShMode {
    /// Keep the DC term, zero every higher band.
    #[default]
    Truncate,
    /// Apply the exact band-wise rotation.
    Rotate,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Box3 {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self, GaussianError> {
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(GaussianError::InvertedBox {
                min: min.into(),
                max: max.into(),
            });
        }
        Ok(Self { min, max })
    }

    /// Box centered on the origin in x/y sitting on z = 0.
    pub fn footprint_box(extent: Vector3<f64>) -> Self {
        Self {
            min: Vector3::new(-extent.x / 2.0, -extent.y / 2.0, 0.0),
            max: Vector3::new(extent.x / 2.0, extent.y / 2.0, extent.z),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    pub fn union(&self, other: &Box3) -> Box3 {
        Box3 {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn inflate(&self, by: f64) -> Box3 {
        Box3 {
            min: self.min.add_scalar(-by),
            max: self.max.add_scalar(by),
        }
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vector3::new(a.x, a.y, a.z),
            Vector3::new(b.x, a.y, a.z),
            Vector3::new(a.x, b.y, a.z),
            Vector3::new(b.x, b.y, a.z),
            Vector3::new(a.x, a.y, b.z),
            Vector3::new(b.x, a.y, b.z),
            Vector3::new(a.x, b.y, b.z),
            Vector3::new(b.x, b.y, b.z),
        ]
    }

    /// Axis-aligned bounds of this box after an affine map.
    pub fn transformed(&self, a: &AffineTransform) -> Box3 {
        let pts = self.corners().map(|c| a.apply_point(&c));
        let mut out = Box3 {
            min: pts[0],
            max: pts[0],
        };
        for p in &pts[1..] {
            out.min = out.min.inf(p);
            out.max = out.max.sup(p);
        }
        out
    }
}

/// `exp(−½ dᵀ Σ⁻¹ d)` with `d = p − mean`.
pub fn evaluate_density(g: &Gaussian, p: &Vector3<f64>) -> f64 {
    // Σ⁻¹ = R diag(1/s²) Rᵀ, so dᵀΣ⁻¹d is the squared norm of Rᵀd / s.
    let d = p - g.mean;
    let local = g.rotation.inverse() * d;
    let m = local.component_div(&g.scale);
    (-0.5 * m.norm_squared()).exp()
}

/// Ellipsoid volume up to the constant `4π/3`, i.e. `√det Σ`.
pub fn volume(g: &Gaussian) -> f64 {
    g.scale.x * g.scale.y * g.scale.z
}

/// Maps every Gaussian into the frame given by `a`.
pub fn apply_affine(cloud: &GaussianCloud, a: &AffineTransform, mode: ShMode) -> GaussianCloud {
    let sh_rot = match mode {
        ShMode::Rotate => Some(sh::ShRotation::new(&a.r)),
        ShMode::Truncate => None,
    };
    let gaussians = cloud
        .gaussians
        .iter()
        .map(|g| {
            let sh_rest = match &sh_rot {
                Some(rot) => rot.apply(&g.sh_rest),
                None => [0.0; SH_REST_LEN],
            };
            Gaussian {
                mean: a.apply_point(&g.mean),
                rotation: a.r * g.rotation,
                scale: g.scale * a.s,
                opacity: g.opacity,
                sh_dc: g.sh_dc,
                sh_rest,
            }
        })
        .collect();
    GaussianCloud {
        gaussians,
        label: cloud.label.clone(),
    }
}

/// Concatenates clouds, preserving order within and across inputs.
pub fn merge_clouds(clouds: &[GaussianCloud]) -> GaussianCloud {
    let mut out = GaussianCloud {
        gaussians: Vec::with_capacity(clouds.iter().map(GaussianCloud::len).sum()),
        label: clouds
            .iter()
            .map(|c| c.label.as_str())
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("+"),
    };
    for c in clouds {
        out.gaussians.extend_from_slice(&c.gaussians);
    }
    out
}

/// Bounds of `mean ± k·extent` over all Gaussians.
pub fn aabb(cloud: &GaussianCloud, k: f64) -> Result<Box3, GaussianError> {
    let first = cloud.gaussians.first().ok_or(GaussianError::EmptyCloud)?;
    let reach = |g: &Gaussian| g.axis_extent() * k;
    let mut min = first.mean - reach(first);
    let mut max = first.mean + reach(first);
    for g in &cloud.gaussians[1..] {
        let r = reach(g);
        min = min.inf(&(g.mean - r));
        max = max.sup(&(g.mean + r));
    }
    Ok(Box3 { min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn g_at(x: f64, y: f64, z: f64) -> Gaussian {
        Gaussian::isotropic(Vector3::new(x, y, z), 1.0, 0.5)
    }

    #[test]
    fn density_at_mean_is_one() {
        let g = g_at(1.0, 2.0, 3.0);
        assert_eq!(evaluate_density(&g, &g.mean), 1.0);
    }

    #[test]
    fn density_unit_distance_isotropic() {
        let g = g_at(0.0, 0.0, 0.0);
        let v = evaluate_density(&g, &Vector3::new(0.0, 1.0, 0.0));
        assert_relative_eq!(v, (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn density_anisotropic_by_hand() {
        // Σ = diag(4, 1, 1); dᵀΣ⁻¹d = 4/4 = 1.
        let mut g = g_at(0.0, 0.0, 0.0);
        g.scale = Vector3::new(2.0, 1.0, 1.0);
        let v = evaluate_density(&g, &Vector3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(v, (-0.5f64).exp(), epsilon = 1e-15);
        // Same check through the explicit covariance matrix.
        let d = Vector3::new(2.0, 0.0, 0.0);
        let q = d.dot(&(g.covariance().try_inverse().unwrap() * d));
        assert_relative_eq!(q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn volume_is_scale_product_and_rotation_invariant() {
        let mut g = g_at(0.0, 0.0, 0.0);
        assert_eq!(volume(&g), 1.0);
        g.scale = Vector3::new(2.0, 3.0, 4.0);
        assert_eq!(volume(&g), 24.0);
        g.rotation = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
        assert_eq!(volume(&g), 24.0);
        assert_relative_eq!(g.covariance().determinant().sqrt(), 24.0, epsilon = 1e-9);
    }

    #[test]
    fn affine_examples() {
        let cloud = GaussianCloud::new("a", vec![g_at(1.0, 1.0, 1.0)]);
        let same = apply_affine(&cloud, &AffineTransform::identity(), ShMode::Truncate);
        assert_eq!(same, cloud);

        let a = AffineTransform::new(2.0, UnitQuaternion::identity(), Vector3::new(1.0, 0.0, 0.0))
            .unwrap();
        let out = apply_affine(&cloud, &a, ShMode::Truncate);
        assert_eq!(out.gaussians[0].mean, Vector3::new(3.0, 2.0, 2.0));
        assert_eq!(out.gaussians[0].scale, Vector3::repeat(2.0));

        let yaw = AffineTransform::from_yaw(1.0, FRAC_PI_2, Vector3::zeros()).unwrap();
        let c = GaussianCloud::new("b", vec![g_at(1.0, 0.0, 0.0)]);
        let m = apply_affine(&c, &yaw, ShMode::Truncate).gaussians[0].mean;
        assert!((m - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn truncate_zeroes_rest_and_keeps_dc() {
        let mut g = g_at(0.0, 0.0, 0.0);
        g.sh_dc = [0.1, 0.2, 0.3];
        g.sh_rest = [0.5; SH_REST_LEN];
        let c = GaussianCloud::new("c", vec![g]);
        let a = AffineTransform::from_yaw(1.0, 0.4, Vector3::zeros()).unwrap();
        let out = apply_affine(&c, &a, ShMode::Truncate);
        assert_eq!(out.gaussians[0].sh_dc, [0.1, 0.2, 0.3]);
        assert!(out.gaussians[0].sh_rest.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_rejects_nonpositive_scale() {
        assert!(AffineTransform::new(0.0, UnitQuaternion::identity(), Vector3::zeros()).is_err());
        assert!(AffineTransform::new(-1.0, UnitQuaternion::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn merge_examples() {
        assert!(merge_clouds(&[]).is_empty());
        let a = GaussianCloud::new("a", (0..3).map(|i| g_at(i as f64, 0.0, 0.0)).collect());
        let b = GaussianCloud::new("b", (0..5).map(|i| g_at(0.0, i as f64, 0.0)).collect());
        assert_eq!(merge_clouds(std::slice::from_ref(&a)), a);
        let m = merge_clouds(&[a.clone(), b]);
        assert_eq!(m.len(), 8);
        assert_eq!(&m.gaussians[..3], &a.gaussians[..]);
    }

    #[test]
    fn aabb_examples() {
        let one = GaussianCloud::new("a", vec![g_at(0.0, 0.0, 0.0)]);
        let b = aabb(&one, 3.0).unwrap();
        assert_eq!(b.min, Vector3::repeat(-3.0));
        assert_eq!(b.max, Vector3::repeat(3.0));
        let b0 = aabb(&one, 0.0).unwrap();
        assert_eq!(b0.min, b0.max);

        let two = GaussianCloud::new("b", vec![g_at(5.0, 0.0, 0.0), g_at(-5.0, 0.0, 0.0)]);
        let b = aabb(&two, 3.0).unwrap();
        assert!(b.min.x <= -5.0 && b.max.x >= 5.0);
        assert_eq!(aabb(&GaussianCloud::default(), 3.0), Err(GaussianError::EmptyCloud));
    }

    #[test]
    fn rotated_extent_matches_ellipsoid_support() {
        let mut g = g_at(0.0, 0.0, 0.0);
        g.scale = Vector3::new(3.0, 1.0, 0.5);
        g.rotation = yaw_quat(std::f64::consts::FRAC_PI_4);
        let e = g.axis_extent();
        assert_relative_eq!(e.x, (4.5f64 + 0.5).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(e.z, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn validate_catches_bad_fields() {
        let mut g = g_at(0.0, 0.0, 0.0);
        g.scale.y = 0.0;
        assert!(matches!(g.validate(2), Err(GaussianError::NonPositiveScale { index: 2, axis: 1, .. })));
        let mut g = g_at(0.0, 0.0, 0.0);
        g.opacity = 1.5;
        assert!(g.validate(0).is_err());
    }

    #[test]
    fn yaw_round_trips() {
        for yaw in [-3.0, -1.0, 0.0, 0.5, 2.5] {
            assert_relative_eq!(yaw_of(&yaw_quat(yaw)), yaw, epsilon = 1e-12);
        }
    }
}

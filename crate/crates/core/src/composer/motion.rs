//! Keyframed affine motion.

use nalgebra::UnitQuaternion;

use super::ComposeError;
use crate::gaussian::AffineTransform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub time: f64,
    pub affine: AffineTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrajectory {
    keyframes: Vec<Keyframe>,
}

impl MotionTrajectory {
    /// Requires at least one keyframe and strictly increasing times.
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self, ComposeError> {
        if keyframes.is_empty() {
            return Err(ComposeError::Trajectory("no keyframes".into()));
        }
        if keyframes.iter().any(|k| !k.time.is_finite()) {
            return Err(ComposeError::Trajectory("non-finite keyframe time".into()));
        }
        if keyframes.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(ComposeError::Trajectory("keyframe times must strictly increase".into()));
        }
        Ok(Self { keyframes })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn start(&self) -> f64 {
        self.keyframes[0].time
    }

    pub fn end(&self) -> f64 {
        self.keyframes[self.keyframes.len() - 1].time
    }
}

/// Slerp along the shorter arc.
fn slerp_short(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    let b = if a.coords.dot(&b.coords) < 0.0 {
        UnitQuaternion::new_unchecked(-b.into_inner())
    } else {
        *b
    };
    a.try_slerp(&b, u, 1e-12).unwrap_or(*a)
}

/// Linear in translation and scale, slerp in rotation; clamped to the end
/// keyframes outside their time range.
pub fn sample_trajectory(traj: &MotionTrajectory, t: f64) -> AffineTransform {
    let ks = &traj.keyframes;
    if t <= ks[0].time {
        return ks[0].affine;
    }
    let last = ks[ks.len() - 1];
    if t >= last.time {
        return last.affine;
    }
    // First keyframe strictly after t; t lies in [ks[i-1], ks[i]).
    let i = ks.partition_point(|k| k.time <= t);
    let (a, b) = (&ks[i - 1], &ks[i]);
    if t == a.time {
        return a.affine;
    }
    let u = (t - a.time) / (b.time - a.time);
    AffineTransform {
        s: a.affine.s + (b.affine.s - a.affine.s) * u,
        r: slerp_short(&a.affine.r, &b.affine.r, u),
        t: a.affine.t + (b.affine.t - a.affine.t) * u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use std::f64::consts::PI;

    fn kf(time: f64, yaw: f64, x: f64) -> Keyframe {
        Keyframe {
            time,
            affine: AffineTransform::from_yaw(1.0, yaw, Vector3::new(x, 0.0, 0.0)).unwrap(),
        }
    }

    #[test]
    fn rejects_bad_keyframes() {
        assert!(MotionTrajectory::new(vec![]).is_err());
        assert!(MotionTrajectory::new(vec![kf(1.0, 0.0, 0.0), kf(1.0, 0.0, 1.0)]).is_err());
        assert!(MotionTrajectory::new(vec![kf(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn takes_the_short_way_round() {
        let tr = MotionTrajectory::new(vec![kf(0.0, 0.9 * PI, 0.0), kf(1.0, -0.9 * PI, 0.0)]).unwrap();
        let mid = sample_trajectory(&tr, 0.5);
        assert!((mid.yaw().abs() - PI).abs() < 1e-9, "{}", mid.yaw());
    }

    #[test]
    fn single_keyframe_is_constant() {
        let tr = MotionTrajectory::new(vec![kf(2.0, 0.3, 1.0)]).unwrap();
        for t in [-5.0, 2.0, 9.0] {
            assert_eq!(sample_trajectory(&tr, t), tr.keyframes()[0].affine);
        }
    }
}

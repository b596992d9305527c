//! Contribution scoring by simulated rasterization, and pruning of the
//! least useful Gaussians.
//!
//! Each Gaussian lands on the single pixel containing its projected center.
//! On every ray the score term is `V(i) / (D² · maxV)`, where `D` is depth
//! along the camera's forward axis and `maxV` the largest volume on that ray.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraPose;
use crate::gaussian::{volume, GaussianCloud};

pub const MIN_DEPTH: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("eta must be in [0, 1), got {0}")]
    Eta(f64),
    #[error("score vector has {got} entries for {expected} Gaussians")]
    Misaligned { expected: usize, got: usize },
    #[error("resolution must be positive, got {0}x{1}")]
    Resolution(usize, usize),
    #[error("at least one pose is required")]
    NoPoses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub fn new(height: usize, width: usize) -> Result<Self, FilterError> {
        if height == 0 || width == 0 {
            return Err(FilterError::Resolution(height, width));
        }
        Ok(Self { height, width })
    }

    pub fn square(n: usize) -> Result<Self, FilterError> {
        Self::new(n, n)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Self { height: 64, width: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub poses_used: usize,
    pub resolution: Resolution,
}

impl ScoreVector {
    /// `index,score` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,score\n");
        for (i, s) in self.scores.iter().enumerate() {
            out.push_str(&format!("{i},{s}\n"));
        }
        out
    }
}

/// Pinhole camera frame of a pose: horizontal field of view, +x right, +y up
/// in the image, principal point at the image center.
struct Projector {
    center: Vector3<f64>,
    forward: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    focal: f64,
    res: Resolution,
}

impl Projector {
    fn new(pose: &CameraPose, res: Resolution) -> Self {
        let forward = pose.forward();
        let (sy, cy) = pose.yaw.sin_cos();
        // Level right vector from the heading, so straight-down views stay defined.
        let right = Vector3::new(cy, sy, 0.0);
        let up = right.cross(&forward);
        Self {
            center: pose.position(),
            forward,
            right,
            up,
            focal: (res.width as f64 / 2.0) / (pose.fov / 2.0).tan(),
            res,
        }
    }

    /// `(row * width + col, depth)` of the pixel containing the projection.
    fn project(&self, p: &Vector3<f64>) -> Option<(usize, f64)> {
        let d = p - self.center;
        let z = d.dot(&self.forward);
        if !(z > 0.0) {
            return None;
        }
        let u = self.res.width as f64 / 2.0 + self.focal * d.dot(&self.right) / z;
        let v = self.res.height as f64 / 2.0 - self.focal * d.dot(&self.up) / z;
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (col, row) = (u.floor() as usize, v.floor() as usize);
        if col >= self.res.width || row >= self.res.height {
            return None;
        }
        Some((row * self.res.width + col, z.max(MIN_DEPTH)))
    }
}

/// Gaussians per pixel for one view, as `(index, depth)` in cloud order.
pub fn assign_to_rays(cloud: &GaussianCloud, pose: &CameraPose, res: Resolution) -> Vec<Vec<(usize, f64)>> {
    let proj = Projector::new(pose, res);
    let mut rays = vec![Vec::new(); res.pixels()];
    for (i, g) in cloud.gaussians.iter().enumerate() {
        if let Some((px, depth)) = proj.project(&g.mean) {
            rays[px].push((i, depth));
        }
    }
    rays
}

fn pose_scores(cloud: &GaussianCloud, vols: &[f64], pose: &CameraPose, res: Resolution) -> Vec<f64> {
    let proj = Projector::new(pose, res);
    let hits: Vec<Option<(usize, f64)>> = cloud.gaussians.iter().map(|g| proj.project(&g.mean)).collect();
    let mut max_v = vec![0.0f64; res.pixels()];
    for (i, h) in hits.iter().enumerate() {
        if let Some((px, _)) = h {
            max_v[*px] = max_v[*px].max(vols[i]);
        }
    }
    hits.iter()
        .enumerate()
        .map(|(i, h)| match h {
            Some((px, d)) => vols[i] / (d * d * max_v[*px]),
            None => 0.0,
        })
        .collect()
}

/// Per-pose partial scores are computed in parallel and summed in pose order.
pub fn contribution_scores(cloud: &GaussianCloud, poses: &[CameraPose], res: Resolution) -> Result<ScoreVector, FilterError> {
    if poses.is_empty() {
        return Err(FilterError::NoPoses);
    }
    Resolution::new(res.height, res.width)?;
    let vols: Vec<f64> = cloud.gaussians.iter().map(volume).collect();
    let partials: Vec<Vec<f64>> = poses.par_iter().map(|p| pose_scores(cloud, &vols, p, res)).collect();
    let mut scores = vec![0.0; cloud.len()];
    for part in &partials {
        for (s, v) in scores.iter_mut().zip(part) {
            *s += v;
        }
    }
    Ok(ScoreVector {
        scores,
        poses_used: poses.len(),
        resolution: res,
    })
}

/// Reference implementation: for every pose, every pixel, every Gaussian.
pub fn brute_force_scores(cloud: &GaussianCloud, poses: &[CameraPose], res: Resolution) -> Result<ScoreVector, FilterError> {
    if poses.is_empty() {
        return Err(FilterError::NoPoses);
    }
    Resolution::new(res.height, res.width)?;
    let n = cloud.len();
    let mut scores = vec![0.0; n];
    for pose in poses {
        let proj = Projector::new(pose, res);
        let hits: Vec<Option<(usize, f64)>> = cloud.gaussians.iter().map(|g| proj.project(&g.mean)).collect();
        let mut partial = vec![0.0; n];
        for px in 0..res.pixels() {
            let mut max_v = 0.0f64;
            for i in 0..n {
                if matches!(hits[i], Some((p, _)) if p == px) {
                    max_v = max_v.max(volume(&cloud.gaussians[i]));
                }
            }
            for i in 0..n {
                if let Some((p, d)) = hits[i] {
                    if p == px {
                        partial[i] += volume(&cloud.gaussians[i]) / (d * d * max_v);
                    }
                }
            }
        }
        for (s, v) in scores.iter_mut().zip(&partial) {
            *s += v;
        }
    }
    Ok(ScoreVector {
        scores,
        poses_used: poses.len(),
        resolution: res,
    })
}

/// Number of Gaussians removed for a fraction `eta` of `n`.
pub fn prune_count(n: usize, eta: f64) -> usize {
    // The small slack keeps products like 0.3 · 10 from rounding up to 4.
    (((eta * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Indices kept when the `prune_count` lowest scores are dropped; ties
/// favor the lower index. Returned in ascending order.
pub fn survivors(scores: &[f64], eta: f64) -> Result<Vec<usize>, FilterError> {
    if !(0.0..1.0).contains(&eta) {
        return Err(FilterError::Eta(eta));
    }
    let n = scores.len();
    let keep = n - prune_count(n, eta);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

pub fn filter_cloud(cloud: &GaussianCloud, scores: &ScoreVector, eta: f64) -> Result<GaussianCloud, FilterError> {
    if scores.scores.len() != cloud.len() {
        return Err(FilterError::Misaligned {
            expected: cloud.len(),
            got: scores.scores.len(),
        });
    }
    let kept = survivors(&scores.scores, eta)?;
    Ok(GaussianCloud::new(
        cloud.label.clone(),
        kept.into_iter().map(|i| cloud.gaussians[i].clone()).collect(),
    ))
}

/// Keeps Gaussians whose score is at least `threshold`.
pub fn filter_by_threshold(cloud: &GaussianCloud, scores: &ScoreVector, threshold: f64) -> Result<GaussianCloud, FilterError> {
    if scores.scores.len() != cloud.len() {
        return Err(FilterError::Misaligned {
            expected: cloud.len(),
            got: scores.scores.len(),
        });
    }
    Ok(GaussianCloud::new(
        cloud.label.clone(),
        cloud
            .gaussians
            .iter()
            .zip(&scores.scores)
            .filter(|(_, &s)| s >= threshold)
            .map(|(g, _)| g.clone())
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian;

    fn eye() -> CameraPose {
        CameraPose {
            position: [0.0, 0.0, 0.0],
            yaw: 0.0,
            pitch: 0.0,
            fov: 60f64.to_radians(),
        }
    }

    #[test]
    fn behind_and_axis_cases() {
        let res = Resolution::square(32).unwrap();
        let c = GaussianCloud::new(
            "t",
            vec![
                Gaussian::isotropic(Vector3::new(0.0, -1.0, 0.0), 0.1, 0.5),
                Gaussian::isotropic(Vector3::new(0.0, 3.0, 0.0), 0.1, 0.5),
            ],
        );
        let rays = assign_to_rays(&c, &eye(), res);
        let hit: Vec<(usize, &Vec<(usize, f64)>)> = rays.iter().enumerate().filter(|(_, r)| !r.is_empty()).collect();
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].0, 16 * 32 + 16);
        assert_eq!(hit[0].1, &vec![(1, 3.0)]);
    }

    #[test]
    fn prune_count_has_no_float_creep() {
        assert_eq!(prune_count(10, 0.3), 3);
        assert_eq!(prune_count(10, 0.25), 3);
        assert_eq!(prune_count(10, 0.0), 0);
        assert_eq!(prune_count(0, 0.5), 0);
        assert_eq!(prune_count(7, 0.1), 1);
    }

    #[test]
    fn ties_keep_lower_indices() {
        assert_eq!(survivors(&[1.0, 1.0, 1.0, 1.0], 0.5).unwrap(), vec![0, 1]);
        assert_eq!(survivors(&[0.0, 2.0, 1.0, 3.0], 0.5).unwrap(), vec![1, 3]);
        assert!(survivors(&[1.0], 1.0).is_err());
        assert!(survivors(&[1.0], -0.1).is_err());
    }
}

//! Training camera batches for environment generation and the shared
//! evaluation path.
//!
//! Headings use the floor-plane convention of the layout module: yaw 0 looks
//! along +y and positive yaw turns toward −x.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use indexmap::IndexMap;
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::Box3;
use crate::layout::regions::{yaw_along, yaw_toward};
use crate::layout::Layout;
use crate::spec::SceneDims;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("pose count must be > 0")]
    ZeroCount,
    #[error("this sampler needs an {0} scene")]
    SceneKind(&'static str),
    #[error("layout has no objects")]
    EmptyLayout,
    #[error("no model bounds for instance `{0}`")]
    MissingAsset(String),
    #[error("step must be > 0, got {0}")]
    Step(f64),
    #[error("invalid camera config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub fov: f64,
}

impl CameraPose {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// Unit viewing direction.
    pub fn forward(&self) -> Vector3<f64> {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        Vector3::new(-sy * cp, cy * cp, sp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    /// Stage-1 disk radius as a fraction of the scene radius.
    pub rho1: f64,
    pub stage1_count: usize,
    pub per_region: usize,
    pub circles: usize,
    pub batches: usize,
    /// Growth of each object box before the camera collision test, meters.
    pub inflation: f64,
    pub fov_deg: f64,
    pub eye_min: f64,
    pub eye_max: f64,
    pub outdoor_eye: f64,
    /// Keeps indoor stage-2 cameras off the walls, meters.
    pub wall_margin: f64,
    /// Extra draws allowed when a region loses all its poses to collisions.
    pub top_up_attempts: usize,
    pub eval_step: f64,
    pub eval_azimuths: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            rho1: 0.25,
            stage1_count: 100,
            per_region: 4,
            circles: 4,
            batches: 8,
            inflation: 0.2,
            fov_deg: 60.0,
            eye_min: 1.2,
            eye_max: 1.8,
            outdoor_eye: 1.6,
            wall_margin: 0.1,
            top_up_attempts: 2000,
            eval_step: 0.25,
            eval_azimuths: 4,
        }
    }
}

impl CameraConfig {
    pub fn fov(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: &str| Err(CameraError::Config(m.into()));
        if !(self.rho1 > 0.0 && self.rho1 <= 1.0) {
            return bad("rho1 must be in (0, 1]");
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("fov_deg must be in (0, 180)");
        }
        if !(self.eye_min <= self.eye_max) {
            return bad("eye_min must not exceed eye_max");
        }
        if self.inflation < 0.0 {
            return bad("inflation must be >= 0");
        }
        if self.circles == 0 {
            return bad("circles must be >= 1");
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn eye_height(scene: &SceneDims, cfg: &CameraConfig, rng: &mut impl Rng) -> f64 {
    if scene.is_outdoor() {
        cfg.outdoor_eye
    } else if cfg.eye_max > cfg.eye_min {
        rng.random_range(cfg.eye_min..=cfg.eye_max)
    } else {
        cfg.eye_min
    }
}

/// Poses near the scene center, looking outward in random directions.
pub fn sample_stage1(scene: &SceneDims, count: usize, seed: u64, cfg: &CameraConfig) -> Result<Vec<CameraPose>, CameraError> {
    if count == 0 {
        return Err(CameraError::ZeroCount);
    }
    let mut rng = rng_for(seed, 1);
    let rho = cfg.rho1 * scene.radius();
    let (lo, hi) = ((-15f64).to_radians(), 30f64.to_radians());
    Ok((0..count)
        .map(|_| {
            let r = rho * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..TAU);
            let z = eye_height(scene, cfg, &mut rng);
            CameraPose {
                position: [r * a.cos(), r * a.sin(), z],
                yaw: rng.random_range(0.0..TAU),
                pitch: rng.random_range(lo..=hi),
                fov: cfg.fov(),
            }
        })
        .collect())
}

/// Plan-view center of every placed object's world box, in layout order.
pub fn object_centers(layout: &Layout, bounds: &HashMap<String, Box3>) -> Result<IndexMap<String, Vector2<f64>>, CameraError> {
    layout
        .placements
        .iter()
        .map(|(id, p)| {
            let b = bounds.get(id).ok_or_else(|| CameraError::MissingAsset(id.clone()))?;
            Ok((id.clone(), b.transformed(&p.affine()).center().xy()))
        })
        .collect()
}

/// Index of the nearest center; ties go to the earlier object.
pub fn nearest_region(p: &Vector2<f64>, centers: &[Vector2<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn floor_point(scene: &SceneDims, margin: f64, rng: &mut impl Rng) -> Vector2<f64> {
    match *scene {
        SceneDims::Indoor { width, length, .. } => {
            let hx = (width / 2.0 - margin).max(0.0);
            let hy = (length / 2.0 - margin).max(0.0);
            Vector2::new(rng.random_range(-hx..=hx), rng.random_range(-hy..=hy))
        }
        SceneDims::Outdoor { radius } => {
            let r = (radius - margin).max(0.0) * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..TAU);
            Vector2::new(r * a.cos(), r * a.sin())
        }
    }
}

/// Draws one pose inside region `k` by rejection, or `None` after `attempts`.
fn region_pose(
    scene: &SceneDims,
    centers: &[Vector2<f64>],
    k: usize,
    cfg: &CameraConfig,
    attempts: usize,
    accept: &dyn Fn(&CameraPose) -> bool,
    rng: &mut impl Rng,
) -> Option<CameraPose> {
    let (lo, hi) = ((-60f64).to_radians(), (-20f64).to_radians());
    for _ in 0..attempts {
        let p = floor_point(scene, cfg.wall_margin, rng);
        if nearest_region(&p, centers) != k {
            continue;
        }
        let pose = CameraPose {
            position: [p.x, p.y, eye_height(scene, cfg, rng)],
            yaw: yaw_toward(&p, &centers[k]),
            pitch: rng.random_range(lo..=hi),
            fov: cfg.fov(),
        };
        if accept(&pose) {
            return Some(pose);
        }
    }
    None
}

/// `per_region` poses in each nearest-object cell, looking at that object.
/// Output is grouped by region in center order.
pub fn sample_stage2_indoor(
    scene: &SceneDims,
    centers: &IndexMap<String, Vector2<f64>>,
    per_region: usize,
    seed: u64,
    cfg: &CameraConfig,
) -> Result<Vec<CameraPose>, CameraError> {
    Ok(stage2_indoor_regions(scene, centers, per_region, seed, cfg)?
        .into_iter()
        .flatten()
        .collect())
}

fn stage2_indoor_regions(
    scene: &SceneDims,
    centers: &IndexMap<String, Vector2<f64>>,
    per_region: usize,
    seed: u64,
    cfg: &CameraConfig,
) -> Result<Vec<Vec<CameraPose>>, CameraError> {
    if scene.is_outdoor() {
        return Err(CameraError::SceneKind("indoor"));
    }
    if centers.is_empty() {
        return Err(CameraError::EmptyLayout);
    }
    if per_region == 0 {
        return Err(CameraError::ZeroCount);
    }
    let pts: Vec<Vector2<f64>> = centers.values().copied().collect();
    let mut rng = rng_for(seed, 2);
    let mut out = Vec::with_capacity(pts.len());
    for k in 0..pts.len() {
        let mut poses = Vec::with_capacity(per_region);
        for _ in 0..per_region {
            // A cell can be empty after clipping to the floor (e.g. two
            // objects sharing a center); fall back to standing at the object.
            let pose = region_pose(scene, &pts, k, cfg, 10_000, &|_| true, &mut rng).unwrap_or_else(|| CameraPose {
                position: [pts[k].x, pts[k].y, eye_height(scene, cfg, &mut rng)],
                yaw: 0.0,
                pitch: (-40f64).to_radians(),
                fov: cfg.fov(),
            });
            poses.push(pose);
        }
        out.push(poses);
    }
    Ok(out)
}

/// Rings at radii k·R/circles; each batch shares one position azimuth and
/// one viewing yaw.
pub fn sample_stage2_outdoor(
    scene: &SceneDims,
    circles: usize,
    batches: usize,
    seed: u64,
    cfg: &CameraConfig,
) -> Result<Vec<CameraPose>, CameraError> {
    let SceneDims::Outdoor { radius } = *scene else {
        return Err(CameraError::SceneKind("outdoor"));
    };
    if circles == 0 || batches == 0 {
        return Err(CameraError::ZeroCount);
    }
    let mut rng = rng_for(seed, 3);
    let mut out = Vec::with_capacity(circles * batches);
    for _ in 0..batches {
        let theta: f64 = rng.random_range(0.0..TAU);
        let view: f64 = rng.random_range(0.0..TAU);
        let (s, c) = theta.sin_cos();
        for k in 1..=circles {
            let r = radius * k as f64 / circles as f64;
            out.push(CameraPose {
                position: [r * c, r * s, cfg.outdoor_eye],
                yaw: view,
                pitch: (-30f64).to_radians(),
                fov: cfg.fov(),
            });
        }
    }
    Ok(out)
}

pub fn assemble_stage3(stage1: &[CameraPose], stage2: &[CameraPose]) -> Vec<CameraPose> {
    stage1.iter().chain(stage2).copied().collect()
}

/// World boxes of every placed object grown by `inflation`.
pub fn inflated_boxes(layout: &Layout, bounds: &HashMap<String, Box3>, inflation: f64) -> Result<Vec<Box3>, CameraError> {
    layout
        .placements
        .iter()
        .map(|(id, p)| {
            let b = bounds.get(id).ok_or_else(|| CameraError::MissingAsset(id.clone()))?;
            Ok(b.transformed(&p.affine()).inflate(inflation))
        })
        .collect()
}

pub fn reject_colliding_poses(
    poses: &[CameraPose],
    layout: &Layout,
    bounds: &HashMap<String, Box3>,
    inflation: f64,
) -> Result<Vec<CameraPose>, CameraError> {
    let boxes = inflated_boxes(layout, bounds, inflation)?;
    Ok(poses
        .iter()
        .filter(|p| !boxes.iter().any(|b| b.contains_point(&p.position())))
        .copied()
        .collect())
}

/// Straight passes along `azimuths` diameters (chords clipped to the scene),
/// then a circle of radius 4/3·R looking at the center.
pub fn evaluation_trajectory(scene: &SceneDims, step: f64, azimuths: usize, cfg: &CameraConfig) -> Result<Vec<CameraPose>, CameraError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(CameraError::Step(step));
    }
    let z = if scene.is_outdoor() {
        cfg.outdoor_eye
    } else {
        0.5 * (cfg.eye_min + cfg.eye_max)
    };
    let mut out = Vec::new();
    for a in 0..azimuths {
        let phi = PI * a as f64 / azimuths as f64;
        let d = Vector2::new(phi.cos(), phi.sin());
        let half = match *scene {
            SceneDims::Indoor { width, length, .. } => {
                let hx = if d.x.abs() > 1e-12 { width / 2.0 / d.x.abs() } else { f64::INFINITY };
                let hy = if d.y.abs() > 1e-12 { length / 2.0 / d.y.abs() } else { f64::INFINITY };
                hx.min(hy)
            }
            SceneDims::Outdoor { radius } => radius,
        };
        let n = (2.0 * half / step + 1e-9).floor() as usize + 1;
        let yaw = yaw_along(&d);
        for k in 0..n {
            let p = d * (-half + step * k as f64);
            out.push(CameraPose {
                position: [p.x, p.y, z],
                yaw,
                pitch: 0.0,
                fov: cfg.fov(),
            });
        }
    }
    let rc = eval_circle_radius(scene);
    let n = ((TAU * rc / step).ceil() as usize).max(3);
    for k in 0..n {
        let a = TAU * k as f64 / n as f64;
        let p = Vector2::new(rc * a.cos(), rc * a.sin());
        out.push(CameraPose {
            position: [p.x, p.y, z],
            yaw: yaw_toward(&p, &Vector2::zeros()),
            pitch: 0.0,
            fov: cfg.fov(),
        });
    }
    Ok(out)
}

/// Two thirds of the scene diameter.
pub fn eval_circle_radius(scene: &SceneDims) -> f64 {
    2.0 / 3.0 * (2.0 * scene.radius())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosePlan {
    pub scene: SceneDims,
    pub stage1: Vec<CameraPose>,
    pub stage2: Vec<CameraPose>,
    pub stage3: Vec<CameraPose>,
    /// Indoor regions left without any collision-free pose.
    pub starved: Vec<String>,
}

/// All three stages with collision rejection. Indoor regions emptied by the
/// rejection are topped up with fresh collision-free draws.
pub fn plan_cameras(
    layout: &Layout,
    bounds: &HashMap<String, Box3>,
    cfg: &CameraConfig,
    seed: u64,
) -> Result<PosePlan, CameraError> {
    cfg.validate()?;
    let scene = layout.scene;
    let boxes = inflated_boxes(layout, bounds, cfg.inflation)?;
    let free = |p: &CameraPose| !boxes.iter().any(|b| b.contains_point(&p.position()));
    let stage1: Vec<CameraPose> = sample_stage1(&scene, cfg.stage1_count, seed, cfg)?.into_iter().filter(|p| free(p)).collect();
    let mut starved = Vec::new();
    let stage2 = if scene.is_outdoor() {
        sample_stage2_outdoor(&scene, cfg.circles, cfg.batches, seed, cfg)?
            .into_iter()
            .filter(|p| free(p))
            .collect()
    } else {
        let centers = object_centers(layout, bounds)?;
        let pts: Vec<Vector2<f64>> = centers.values().copied().collect();
        let regions = stage2_indoor_regions(&scene, &centers, cfg.per_region, seed, cfg)?;
        let mut rng = rng_for(seed, 4);
        let mut out = Vec::new();
        for (k, poses) in regions.into_iter().enumerate() {
            let mut kept: Vec<CameraPose> = poses.into_iter().filter(|p| free(p)).collect();
            if kept.is_empty() {
                match region_pose(&scene, &pts, k, cfg, cfg.top_up_attempts, &free, &mut rng) {
                    Some(p) => kept.push(p),
                    None => starved.push(centers.get_index(k).expect("region").0.clone()),
                }
            }
            out.extend(kept);
        }
        out
    };
    let stage3 = assemble_stage3(&stage1, &stage2);
    Ok(PosePlan {
        scene,
        stage1,
        stage2,
        stage3,
        starved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseLine {
    pub stage: String,
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub fov: f64,
}

/// One JSON object per line.
pub fn poses_to_jsonl(stage: &str, poses: &[CameraPose]) -> String {
    let mut out = String::new();
    for p in poses {
        let line = PoseLine {
            stage: stage.to_string(),
            position: p.position,
            yaw: p.yaw,
            pitch: p.pitch,
            fov: p.fov,
        };
        out.push_str(&serde_json::to_string(&line).expect("pose serializes"));
        out.push('\n');
    }
    out
}

pub fn poses_from_jsonl(text: &str) -> Result<Vec<(String, CameraPose)>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let p: PoseLine = serde_json::from_str(l)?;
            Ok((
                p.stage,
                CameraPose {
                    position: p.position,
                    yaw: p.yaw,
                    pitch: p.pitch,
                    fov: p.fov,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_heading_convention() {
        let p = CameraPose {
            position: [0.0; 3],
            yaw: 0.0,
            pitch: 0.0,
            fov: 1.0,
        };
        assert!((p.forward() - Vector3::y()).norm() < 1e-12);
        let q = CameraPose { yaw: PI / 2.0, ..p };
        assert!((q.forward() + Vector3::x()).norm() < 1e-12);
        let down = CameraPose { pitch: -PI / 2.0, ..p };
        assert!((down.forward() + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn nearest_region_breaks_ties_low() {
        let c = [Vector2::new(-1.0, 0.0), Vector2::new(1.0, 0.0)];
        assert_eq!(nearest_region(&Vector2::new(0.0, 3.0), &c), 0);
        assert_eq!(nearest_region(&Vector2::new(0.2, 0.0), &c), 1);
    }

    #[test]
    fn jsonl_round_trips() {
        let poses = sample_stage1(&SceneDims::indoor(4.0, 4.0, 3.0).unwrap(), 3, 1, &CameraConfig::default()).unwrap();
        let text = poses_to_jsonl("stage1", &poses);
        assert_eq!(text.lines().count(), 3);
        let back = poses_from_jsonl(&text).unwrap();
        assert!(back.iter().all(|(s, _)| s == "stage1"));
        assert_eq!(back.into_iter().map(|(_, p)| p).collect::<Vec<_>>(), poses);
    }

    #[test]
    fn config_is_validated() {
        let cfg = CameraConfig {
            fov_deg: 180.0,
            ..CameraConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(CameraConfig::default().validate().is_ok());
    }
}

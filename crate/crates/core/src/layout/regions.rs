//! Floor-plane anchor regions and their grid candidates.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::LayoutError;
use crate::spec::{AnchorRegion, SceneDims};

const EPS: f64 = 1e-9;

/// Region geometry as fractions of the scene extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionParams {
    /// Wall band width as a fraction of `min(width, length)`.
    pub side_band: f64,
    /// Central rectangle size as a fraction of width and length.
    pub center_fraction: f64,
    /// Outdoor center disk radius as a fraction of the scene radius.
    pub outdoor_center: f64,
    /// Outdoor rim starts at this fraction of the scene radius.
    pub outdoor_side: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            side_band: 0.15,
            center_fraction: 0.4,
            outdoor_center: 0.2,
            outdoor_side: 0.8,
        }
    }
}

/// Grid points of one anchor region.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub instance: String,
    pub positions: Vec<Vector2<f64>>,
}

impl CandidateSet {
    /// Mean of the positions; the origin when empty.
    pub fn centroid(&self) -> Vector2<f64> {
        if self.positions.is_empty() {
            return Vector2::zeros();
        }
        let sum: Vector2<f64> = self.positions.iter().sum();
        sum / self.positions.len() as f64
    }
}

/// Walls whose band contains `p`, as inward unit normals.
fn walls_in_band(p: &Vector2<f64>, width: f64, length: f64, band: f64) -> Vec<Vector2<f64>> {
    let mut out = Vec::new();
    if p.x + width / 2.0 <= band + EPS {
        out.push(Vector2::new(1.0, 0.0));
    }
    if width / 2.0 - p.x <= band + EPS {
        out.push(Vector2::new(-1.0, 0.0));
    }
    if p.y + length / 2.0 <= band + EPS {
        out.push(Vector2::new(0.0, 1.0));
    }
    if length / 2.0 - p.y <= band + EPS {
        out.push(Vector2::new(0.0, -1.0));
    }
    out
}

pub fn classify(p: &Vector2<f64>, scene: &SceneDims, params: &RegionParams) -> AnchorRegion {
    match *scene {
        SceneDims::Indoor { width, length, .. } => {
            let band = params.side_band * width.min(length);
            match walls_in_band(p, width, length, band).len() {
                0 => {
                    let half = params.center_fraction / 2.0;
                    if p.x.abs() <= half * width + EPS && p.y.abs() <= half * length + EPS {
                        AnchorRegion::Center
                    } else {
                        AnchorRegion::Others
                    }
                }
                1 => AnchorRegion::Side,
                _ => AnchorRegion::Corner,
            }
        }
        SceneDims::Outdoor { radius } => {
            let r = p.norm();
            if r <= params.outdoor_center * radius + EPS {
                AnchorRegion::Center
            } else if r >= params.outdoor_side * radius - EPS {
                AnchorRegion::Side
            } else {
                AnchorRegion::Others
            }
        }
    }
}

/// Whether `p` lies on the scene floor at all.
pub fn inside_scene(p: &Vector2<f64>, scene: &SceneDims) -> bool {
    match *scene {
        SceneDims::Indoor { width, length, .. } => {
            p.x.abs() <= width / 2.0 + EPS && p.y.abs() <= length / 2.0 + EPS
        }
        SceneDims::Outdoor { radius } => p.norm() <= radius + EPS,
    }
}

/// Every grid point of the scene floor, row-major in (y, x).
pub fn grid_points(scene: &SceneDims, grid: f64) -> Vec<Vector2<f64>> {
    let (hx, hy) = match *scene {
        SceneDims::Indoor { width, length, .. } => (width / 2.0, length / 2.0),
        SceneDims::Outdoor { radius } => (radius, radius),
    };
    let nx = (hx / grid + EPS).floor() as i64;
    let ny = (hy / grid + EPS).floor() as i64;
    let mut out = Vec::new();
    for j in -ny..=ny {
        for i in -nx..=nx {
            let p = Vector2::new(i as f64 * grid, j as f64 * grid);
            if inside_scene(&p, scene) {
                out.push(p);
            }
        }
    }
    out
}

pub fn candidate_positions(
    region: AnchorRegion,
    scene: &SceneDims,
    grid: f64,
) -> Result<CandidateSet, LayoutError> {
    candidate_positions_with(region, scene, grid, &RegionParams::default())
}

pub fn candidate_positions_with(
    region: AnchorRegion,
    scene: &SceneDims,
    grid: f64,
    params: &RegionParams,
) -> Result<CandidateSet, LayoutError> {
    if !(grid > 0.0) || !grid.is_finite() {
        return Err(LayoutError::BadGrid(grid));
    }
    if region == AnchorRegion::Corner && scene.is_outdoor() {
        return Err(LayoutError::CornerOutdoor);
    }
    let positions = grid_points(scene, grid)
        .into_iter()
        .filter(|p| classify(p, scene, params) == region)
        .collect();
    Ok(CandidateSet {
        instance: String::new(),
        positions,
    })
}

/// Yaw whose forward axis (+y locally) points along `dir`.
pub fn yaw_along(dir: &Vector2<f64>) -> f64 {
    // Adding zero turns a -0.0 heading into 0.0.
    (-dir.x).atan2(dir.y) + 0.0
}

/// Yaw that makes an object at `from` look at `to`; 0 when they coincide.
pub fn yaw_toward(from: &Vector2<f64>, to: &Vector2<f64>) -> f64 {
    let d = to - from;
    if d.norm() <= EPS {
        0.0
    } else {
        yaw_along(&d)
    }
}

/// Facing for boundary anchors: the nearest wall's inward normal for an
/// indoor SIDE position, straight at the center for corners and outdoor rims.
/// `None` for CENTER and OTHERS.
pub fn facing_yaw(
    region: AnchorRegion,
    p: &Vector2<f64>,
    scene: &SceneDims,
    params: &RegionParams,
) -> Option<f64> {
    match region {
        AnchorRegion::Center | AnchorRegion::Others => None,
        AnchorRegion::Corner => Some(yaw_toward(p, &Vector2::zeros())),
        AnchorRegion::Side => match *scene {
            SceneDims::Indoor { width, length, .. } => {
                let band = params.side_band * width.min(length);
                let walls = walls_in_band(p, width, length, band);
                match walls.as_slice() {
                    [n] => Some(yaw_along(n)),
                    _ => {
                        // Off-band positions: use the closest wall.
                        let gaps = [
                            (p.x + width / 2.0, Vector2::new(1.0, 0.0)),
                            (width / 2.0 - p.x, Vector2::new(-1.0, 0.0)),
                            (p.y + length / 2.0, Vector2::new(0.0, 1.0)),
                            (length / 2.0 - p.y, Vector2::new(0.0, -1.0)),
                        ];
                        let n = gaps
                            .iter()
                            .min_by(|a, b| a.0.total_cmp(&b.0))
                            .map(|g| g.1)
                            .expect("four walls");
                        Some(yaw_along(&n))
                    }
                }
            }
            SceneDims::Outdoor { .. } => Some(yaw_toward(p, &Vector2::zeros())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn room(w: f64, l: f64) -> SceneDims {
        SceneDims::indoor(w, l, 3.0).unwrap()
    }

    #[test]
    fn side_excludes_center_point() {
        let c = candidate_positions(AnchorRegion::Side, &room(4.0, 4.0), 1.0).unwrap();
        assert!(!c.positions.iter().any(|p| p.norm() == 0.0));
        assert!(!c.positions.is_empty());
    }

    #[test]
    fn center_matches_enumeration() {
        // Central rectangle is 1.6 × 1.6; grid points with |x|, |y| ≤ 0.8.
        let c = candidate_positions(AnchorRegion::Center, &room(4.0, 4.0), 0.5).unwrap();
        let mut want = Vec::new();
        for j in -4..=4 {
            for i in -4..=4 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                if x.abs() <= 0.8 && y.abs() <= 0.8 {
                    want.push(Vector2::new(x, y));
                }
            }
        }
        assert_eq!(want.len(), 9);
        assert_eq!(c.positions, want);
    }

    #[test]
    fn corner_outdoor_is_error() {
        let s = SceneDims::outdoor(10.0).unwrap();
        assert!(matches!(
            candidate_positions(AnchorRegion::Corner, &s, 1.0),
            Err(LayoutError::CornerOutdoor)
        ));
        assert!(matches!(
            candidate_positions(AnchorRegion::Side, &s, 0.0),
            Err(LayoutError::BadGrid(_))
        ));
    }

    #[test]
    fn regions_partition_the_grid() {
        let s = room(6.0, 5.0);
        let all = grid_points(&s, 0.25).len();
        let total: usize = AnchorRegion::ALL
            .iter()
            .map(|r| candidate_positions(*r, &s, 0.25).unwrap().positions.len())
            .sum();
        assert_eq!(all, total);
    }

    #[test]
    fn outdoor_rings() {
        let s = SceneDims::outdoor(10.0).unwrap();
        let p = RegionParams::default();
        assert_eq!(classify(&Vector2::new(2.0, 0.0), &s, &p), AnchorRegion::Center);
        assert_eq!(classify(&Vector2::new(0.0, 5.0), &s, &p), AnchorRegion::Others);
        assert_eq!(classify(&Vector2::new(6.0, 6.0), &s, &p), AnchorRegion::Side);
    }

    #[test]
    fn facing_points_inward() {
        let s = room(6.0, 5.0);
        let p = RegionParams::default();
        let south = facing_yaw(AnchorRegion::Side, &Vector2::new(0.0, -2.0), &s, &p).unwrap();
        assert!(south.abs() < 1e-12);
        let north = facing_yaw(AnchorRegion::Side, &Vector2::new(0.0, 2.0), &s, &p).unwrap();
        assert!((north.abs() - PI).abs() < 1e-12);
        let east = facing_yaw(AnchorRegion::Side, &Vector2::new(2.75, 0.0), &s, &p).unwrap();
        // Forward (−sin, cos) must be −x.
        assert!((-east.sin() + 1.0).abs() < 1e-12 && east.cos().abs() < 1e-12);
        let corner = facing_yaw(AnchorRegion::Corner, &Vector2::new(2.5, 2.0), &s, &p).unwrap();
        let f = Vector2::new(-corner.sin(), corner.cos());
        assert!((f - Vector2::new(-2.5, -2.0).normalize()).norm() < 1e-12);
        assert_eq!(facing_yaw(AnchorRegion::Center, &Vector2::zeros(), &s, &p), None);
    }
}

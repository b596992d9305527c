//! Background Gaussians: a shell of cuboid faces indoors, a hemisphere over a
//! ground disk outdoors.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::ComposeError;
use crate::gaussian::{Gaussian, GaussianCloud};
use crate::spec::SceneDims;

pub const ENV_OPACITY: f64 = 0.8;
/// Outdoor shell radius as a multiple of the scene radius.
pub const DOME_FACTOR: f64 = 3.0;

fn env_gaussian(p: Vector3<f64>, spacing: f64) -> Gaussian {
    // DC = 0 renders as mid-gray.
    Gaussian::isotropic(p, spacing / 2.0, ENV_OPACITY)
}

fn check_spacing(spacing: f64) -> Result<(), ComposeError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(ComposeError::Spacing(spacing));
    }
    Ok(())
}

fn divisions(dim: f64, spacing: f64) -> usize {
    ((dim / spacing).ceil() as usize).max(1)
}

/// Lattice points on the six inner faces of the room box, each point once.
/// Order: floor, ceiling, then walls at y = −L/2, y = +L/2, x = −W/2,
/// x = +W/2; each face row-major.
pub fn init_indoor_environment(scene: &SceneDims, spacing: f64) -> Result<GaussianCloud, ComposeError> {
    let SceneDims::Indoor { width, length, height } = *scene else {
        return Err(ComposeError::SceneKind("indoor"));
    };
    check_spacing(spacing)?;
    let (nx, ny, nz) = (divisions(width, spacing), divisions(length, spacing), divisions(height, spacing));
    let x = |i: usize| -width / 2.0 + width * i as f64 / nx as f64;
    let y = |j: usize| -length / 2.0 + length * j as f64 / ny as f64;
    let z = |k: usize| height * k as f64 / nz as f64;
    let mut out = Vec::new();
    for k in [0, nz] {
        for j in 0..=ny {
            for i in 0..=nx {
                out.push(env_gaussian(Vector3::new(x(i), y(j), z(k)), spacing));
            }
        }
    }
    for j in [0, ny] {
        for k in 1..nz {
            for i in 0..=nx {
                out.push(env_gaussian(Vector3::new(x(i), y(j), z(k)), spacing));
            }
        }
    }
    for i in [0, nx] {
        for k in 1..nz {
            for j in 1..ny {
                out.push(env_gaussian(Vector3::new(x(i), y(j), z(k)), spacing));
            }
        }
    }
    Ok(GaussianCloud::new("environment", out))
}

/// Fibonacci-sampled upper hemisphere of radius 3R followed by a square
/// lattice clipped to the ground disk of the same radius.
pub fn init_outdoor_environment(scene: &SceneDims, spacing: f64) -> Result<GaussianCloud, ComposeError> {
    let SceneDims::Outdoor { radius } = *scene else {
        return Err(ComposeError::SceneKind("outdoor"));
    };
    check_spacing(spacing)?;
    let rd = DOME_FACTOR * radius;
    let mut out = Vec::new();
    let n = ((2.0 * PI * rd * rd / (spacing * spacing)).round() as usize).max(1);
    let golden = PI * (3.0 - 5f64.sqrt());
    for i in 0..n {
        // Uniform in z over (0, 1] gives uniform area on the hemisphere.
        let cz = 1.0 - (i as f64 + 0.5) / n as f64;
        let rxy = (1.0 - cz * cz).sqrt();
        let phi = golden * i as f64;
        out.push(env_gaussian(Vector3::new(rd * rxy * phi.cos(), rd * rxy * phi.sin(), rd * cz), spacing));
    }
    let steps = (rd / spacing).floor() as i64;
    for j in -steps..=steps {
        for i in -steps..=steps {
            let (px, py) = (i as f64 * spacing, j as f64 * spacing);
            if px * px + py * py <= rd * rd {
                out.push(env_gaussian(Vector3::new(px, py, 0.0), spacing));
            }
        }
    }
    Ok(GaussianCloud::new("environment", out))
}

/// Dispatches on the scene kind.
pub fn init_environment(scene: &SceneDims, spacing: f64) -> Result<GaussianCloud, ComposeError> {
    match scene {
        SceneDims::Indoor { .. } => init_indoor_environment(scene, spacing),
        SceneDims::Outdoor { .. } => init_outdoor_environment(scene, spacing),
    }
}

/// Number of Gaussians on the hemisphere part of an outdoor environment.
pub fn hemisphere_count(radius: f64, spacing: f64) -> usize {
    let rd = DOME_FACTOR * radius;
    ((2.0 * PI * rd * rd / (spacing * spacing)).round() as usize).max(1)
}

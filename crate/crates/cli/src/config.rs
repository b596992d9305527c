use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use splatscene::camera::CameraConfig;
use splatscene::layout::LayoutConfig;
use splatscene::planner::PlannerConfig;
use splatscene::spec::SceneDims;

use crate::UsageError;

/// Settings shared by every subcommand. Loaded from the `--config` JSON
/// document, then overridden field by field from flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Fallback extent when the planning documents come without `scene.json`.
    pub scene: Option<SceneDims>,
    pub layout: LayoutConfig,
    pub cameras: CameraConfig,
    pub planner: PlannerConfig,
    pub eta: f64,
    /// Square render resolution used for contribution scoring.
    pub resolution: usize,
    /// Samples per unit edge of the stand-in box assets.
    pub asset_density: usize,
    pub environment_spacing: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: None,
            layout: LayoutConfig::default(),
            cameras: CameraConfig::default(),
            planner: PlannerConfig::default(),
            eta: 0.1,
            resolution: 64,
            asset_density: 8,
            environment_spacing: 0.25,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn check(&self) -> Result<(), UsageError> {
        if !(0.0..1.0).contains(&self.eta) {
            return Err(UsageError(format!("eta must be in [0, 1), got {}", self.eta)));
        }
        if self.resolution == 0 {
            return Err(UsageError("resolution must be positive".into()));
        }
        if !(self.layout.grid > 0.0) {
            return Err(UsageError(format!("grid must be > 0, got {}", self.layout.grid)));
        }
        if !(self.environment_spacing > 0.0) {
            return Err(UsageError(format!(
                "environment spacing must be > 0, got {}",
                self.environment_spacing
            )));
        }
        if self.asset_density < 2 {
            return Err(UsageError("asset density must be at least 2".into()));
        }
        self.cameras.validate().map_err(|e| UsageError(e.to_string()))?;
        if let Some(scene) = self.scene {
            scene.validated().map_err(|e| UsageError(e.to_string()))?;
        }
        Ok(())
    }
}

/// `WxLxH` for an indoor room or a single radius for an outdoor disk.
pub fn parse_dims(text: &str) -> Result<SceneDims, String> {
    let parts: Vec<&str> = text.split(['x', 'X']).collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{text}`: not a number")))
        .collect::<Result<Vec<f64>, String>>()?;
    let dims = match nums[..] {
        [r] => SceneDims::outdoor(r),
        [w, l, h] => SceneDims::indoor(w, l, h),
        _ => return Err(format!("`{text}`: expected WxLxH or a radius")),
    };
    dims.map_err(|e| e.to_string())
}

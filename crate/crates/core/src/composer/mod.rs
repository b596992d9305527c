//! World composition: environment initialization, placing object clouds by
//! their affines, edits against a constraint graph, and keyframed motion.

pub mod environment;
pub mod motion;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{
    apply_affine, load_ply, merge_clouds, quat_from_wxyz, yaw_quat, AffineTransform, Box3, GaussianCloud, GaussianError,
    PlyError, ShMode,
};
use crate::layout::{
    place_additional, solve_layout_with, verify_layout_with, Layout, LayoutConfig, LayoutError, LayoutReport, Placement,
};
use crate::spec::{ConstraintGraph, Edge, GraphError, ObjectNode, SceneDims};

pub use environment::{init_environment, init_indoor_environment, init_outdoor_environment};
pub use motion::{sample_trajectory, Keyframe, MotionTrajectory};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("environment spacing must be > 0, got {0}")]
    Spacing(f64),
    #[error("this environment needs an {0} scene")]
    SceneKind(&'static str),
    #[error("no asset cloud for instance `{0}`")]
    MissingAsset(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance `{0}` already exists")]
    DuplicateInstance(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("asset {path}: {source}")]
    Ply { path: PathBuf, source: PlyError },
    #[error("asset {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn place_all<'a>(
    items: impl IntoParallelIterator<Item = (&'a String, AffineTransform)>,
    assets: &HashMap<String, GaussianCloud>,
) -> Result<Vec<GaussianCloud>, ComposeError> {
    items
        .into_par_iter()
        .map(|(id, a)| {
            let cloud = assets.get(id).ok_or_else(|| ComposeError::MissingAsset(id.clone()))?;
            Ok(apply_affine(cloud, &a, ShMode::Rotate))
        })
        .collect()
}

/// Environment first, then every instance in layout order.
pub fn compose_scene(
    layout: &Layout,
    assets: &HashMap<String, GaussianCloud>,
    environment: &GaussianCloud,
) -> Result<GaussianCloud, ComposeError> {
    let items: Vec<(&String, AffineTransform)> = layout.placements.iter().map(|(id, p)| (id, p.affine())).collect();
    let mut clouds = vec![environment.clone()];
    clouds.extend(place_all(items, assets)?);
    Ok(merge_clouds(&clouds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    /// Asset path, relative to the manifest's directory.
    pub asset: String,
    pub affine: AffineTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePackage {
    pub scene: SceneDims,
    pub seed: u64,
    pub objects: IndexMap<String, SceneObject>,
    pub environment_spacing: f64,
    pub environment: GaussianCloud,
    pub trajectories: IndexMap<String, MotionTrajectory>,
}

impl ScenePackage {
    pub fn from_layout(
        layout: &Layout,
        asset_refs: &HashMap<String, String>,
        environment_spacing: f64,
    ) -> Result<Self, ComposeError> {
        let mut objects = IndexMap::new();
        for (id, p) in &layout.placements {
            let asset = asset_refs.get(id).ok_or_else(|| ComposeError::MissingAsset(id.clone()))?;
            objects.insert(
                id.clone(),
                SceneObject {
                    asset: asset.clone(),
                    affine: p.affine(),
                },
            );
        }
        Ok(Self {
            scene: layout.scene,
            seed: layout.seed,
            objects,
            environment_spacing,
            environment: init_environment(&layout.scene, environment_spacing)?,
            trajectories: IndexMap::new(),
        })
    }

    /// Yaw-only view of the package for the layout checker.
    pub fn to_layout(&self) -> Layout {
        Layout {
            scene: self.scene,
            seed: self.seed,
            placements: self
                .objects
                .iter()
                .map(|(id, o)| {
                    let p = Placement {
                        s: o.affine.s,
                        t: o.affine.t.into(),
                        yaw_radians: o.affine.yaw(),
                    };
                    (id.clone(), p)
                })
                .collect(),
            deferred: Vec::new(),
        }
    }

    pub fn set_trajectory(&mut self, id: &str, traj: MotionTrajectory) -> Result<(), ComposeError> {
        if !self.objects.contains_key(id) {
            return Err(ComposeError::UnknownInstance(id.to_string()));
        }
        self.trajectories.insert(id.to_string(), traj);
        Ok(())
    }

    pub fn to_manifest_json(&self) -> String {
        let m = Manifest {
            scene: self.scene,
            seed: self.seed,
            objects: self
                .objects
                .iter()
                .map(|(id, o)| ManifestObject {
                    id: id.clone(),
                    asset: o.asset.clone(),
                    pose: PoseRecord::from_affine(&o.affine),
                })
                .collect(),
            environment: EnvironmentRecord {
                kind: if self.scene.is_outdoor() { "outdoor" } else { "indoor" }.into(),
                spacing: self.environment_spacing,
            },
            trajectories: self
                .trajectories
                .iter()
                .map(|(id, tr)| TrajectoryRecord {
                    id: id.clone(),
                    keyframes: tr
                        .keyframes()
                        .iter()
                        .map(|k| KeyframeRecord {
                            time: k.time,
                            pose: PoseRecord::from_affine(&k.affine),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    /// Parses a manifest and regenerates the environment from its spacing.
    pub fn from_manifest_json(text: &str) -> Result<Self, ComposeError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ComposeError::Manifest(e.to_string()))?;
        let scene = m.scene.validated().map_err(|e| ComposeError::Manifest(e.to_string()))?;
        let expected = if scene.is_outdoor() { "outdoor" } else { "indoor" };
        if m.environment.kind != expected {
            return Err(ComposeError::Manifest(format!(
                "environment kind `{}` does not match an {expected} scene",
                m.environment.kind
            )));
        }
        let mut objects = IndexMap::new();
        for o in m.objects {
            let affine = o.pose.to_affine().map_err(|e| ComposeError::Manifest(format!("`{}`: {e}", o.id)))?;
            if objects.insert(o.id.clone(), SceneObject { asset: o.asset, affine }).is_some() {
                return Err(ComposeError::DuplicateInstance(o.id));
            }
        }
        let mut pkg = Self {
            scene,
            seed: m.seed,
            objects,
            environment_spacing: m.environment.spacing,
            environment: init_environment(&scene, m.environment.spacing)?,
            trajectories: IndexMap::new(),
        };
        for (id, tr) in trajectories_from_records(m.trajectories)? {
            pkg.set_trajectory(&id, tr)?;
        }
        Ok(pkg)
    }

    /// Attaches trajectories given as a JSON array in the manifest's
    /// `trajectories` format, replacing existing ones for the same ids.
    pub fn attach_trajectories_json(&mut self, text: &str) -> Result<(), ComposeError> {
        let records: Vec<TrajectoryRecord> =
            serde_json::from_str(text).map_err(|e| ComposeError::Trajectory(e.to_string()))?;
        for (id, tr) in trajectories_from_records(records)? {
            self.set_trajectory(&id, tr)?;
        }
        Ok(())
    }

    /// Loads every referenced PLY relative to `base`, reading shared files once.
    pub fn load_assets(&self, base: &Path) -> Result<HashMap<String, GaussianCloud>, ComposeError> {
        let mut by_path: HashMap<&str, GaussianCloud> = HashMap::new();
        let mut out = HashMap::new();
        for (id, o) in &self.objects {
            if !by_path.contains_key(o.asset.as_str()) {
                let path = base.join(&o.asset);
                let bytes = std::fs::read(&path).map_err(|source| ComposeError::Io {
                    path: path.clone(),
                    source,
                })?;
                let cloud = load_ply(&bytes).map_err(|source| ComposeError::Ply { path, source })?;
                by_path.insert(&o.asset, cloud);
            }
            out.insert(id.clone(), by_path[o.asset.as_str()].clone());
        }
        Ok(out)
    }
}

/// Static composition of a package.
pub fn compose_package(pkg: &ScenePackage, assets: &HashMap<String, GaussianCloud>) -> Result<GaussianCloud, ComposeError> {
    let items: Vec<(&String, AffineTransform)> = pkg.objects.iter().map(|(id, o)| (id, o.affine)).collect();
    let mut clouds = vec![pkg.environment.clone()];
    clouds.extend(place_all(items, assets)?);
    Ok(merge_clouds(&clouds))
}

/// Like [`compose_package`], with animated instances posed at time `t`.
pub fn compose_scene_at_time(
    pkg: &ScenePackage,
    assets: &HashMap<String, GaussianCloud>,
    t: f64,
) -> Result<GaussianCloud, ComposeError> {
    let items: Vec<(&String, AffineTransform)> = pkg
        .objects
        .iter()
        .map(|(id, o)| {
            let a = pkg.trajectories.get(id).map_or(o.affine, |tr| sample_trajectory(tr, t));
            (id, a)
        })
        .collect();
    let mut clouds = vec![pkg.environment.clone()];
    clouds.extend(place_all(items, assets)?);
    Ok(merge_clouds(&clouds))
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    scene: SceneDims,
    #[serde(default)]
    seed: u64,
    objects: Vec<ManifestObject>,
    environment: EnvironmentRecord,
    #[serde(default)]
    trajectories: Vec<TrajectoryRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestObject {
    id: String,
    asset: String,
    #[serde(flatten)]
    pose: PoseRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnvironmentRecord {
    kind: String,
    spacing: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    id: String,
    keyframes: Vec<KeyframeRecord>,
}

fn trajectories_from_records(records: Vec<TrajectoryRecord>) -> Result<IndexMap<String, MotionTrajectory>, ComposeError> {
    let mut out = IndexMap::new();
    for tr in records {
        let keyframes = tr
            .keyframes
            .into_iter()
            .map(|k| {
                Ok(Keyframe {
                    time: k.time,
                    affine: k.pose.to_affine().map_err(|e| ComposeError::Manifest(format!("`{}`: {e}", tr.id)))?,
                })
            })
            .collect::<Result<Vec<_>, ComposeError>>()?;
        if out.contains_key(&tr.id) {
            return Err(ComposeError::Manifest(format!("two trajectories for `{}`", tr.id)));
        }
        out.insert(tr.id, MotionTrajectory::new(keyframes)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct KeyframeRecord {
    time: f64,
    #[serde(flatten)]
    pose: PoseRecord,
}

/// `s`, `t` and either `quat` as `[w, x, y, z]` or `yaw` in radians. Written
/// back always as `quat`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub s: f64,
    pub t: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quat: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
}

impl PoseRecord {
    pub fn from_affine(a: &AffineTransform) -> Self {
        let q = a.r.quaternion();
        Self {
            s: a.s,
            t: a.t.into(),
            quat: Some([q.w, q.i, q.j, q.k]),
            yaw: None,
        }
    }

    pub fn to_affine(&self) -> Result<AffineTransform, String> {
        let r = match (self.quat, self.yaw) {
            (Some([w, x, y, z]), None) => {
                let n = (w * w + x * x + y * y + z * z).sqrt();
                if !(n > 0.0) || !n.is_finite() {
                    return Err("quaternion must be nonzero".into());
                }
                quat_from_wxyz(w, x, y, z)
            }
            (None, Some(yaw)) => yaw_quat(yaw),
            (None, None) => yaw_quat(0.0),
            (Some(_), Some(_)) => return Err("give either `quat` or `yaw`, not both".into()),
        };
        AffineTransform::new(self.s, r, Vector3::from(self.t)).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditCommand {
    Relocate {
        instance: String,
        affine: AffineTransform,
    },
    /// Places `node` by candidate search when `affine` is absent.
    Add {
        node: ObjectNode,
        edges: Vec<Edge>,
        asset: String,
        affine: Option<AffineTransform>,
    },
    Remove {
        instance: String,
    },
}

impl EditCommand {
    pub fn instance(&self) -> &str {
        match self {
            Self::Relocate { instance, .. } | Self::Remove { instance } => instance,
            Self::Add { node, .. } => &node.id,
        }
    }
}

/// JSON form of an edit: `{"kind": "relocate" | "add" | "remove", ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EditRecord {
    Relocate {
        instance: String,
        #[serde(flatten)]
        pose: PoseRecord,
    },
    Add {
        node: ObjectNode,
        #[serde(default)]
        edges: Vec<Edge>,
        asset: String,
        #[serde(default)]
        pose: Option<PoseRecord>,
    },
    Remove {
        instance: String,
    },
}

impl TryFrom<EditRecord> for EditCommand {
    type Error = ComposeError;

    fn try_from(r: EditRecord) -> Result<Self, ComposeError> {
        let pose = |p: &PoseRecord, id: &str| p.to_affine().map_err(|e| ComposeError::Manifest(format!("`{id}`: {e}")));
        Ok(match r {
            EditRecord::Relocate { instance, pose: p } => {
                let affine = pose(&p, &instance)?;
                Self::Relocate { instance, affine }
            }
            EditRecord::Add { node, edges, asset, pose: p } => {
                let affine = p.as_ref().map(|p| pose(p, &node.id)).transpose()?;
                Self::Add { node, edges, asset, affine }
            }
            EditRecord::Remove { instance } => Self::Remove { instance },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub package: ScenePackage,
    pub graph: ConstraintGraph,
    pub report: LayoutReport,
    /// Whether the whole layout was re-solved.
    pub replanned: bool,
}

/// Applies one edit and verifies the result. Violations are reported, not
/// rejected.
pub fn apply_edit(
    pkg: &ScenePackage,
    cmd: &EditCommand,
    graph: &ConstraintGraph,
    bounds: &HashMap<String, Box3>,
    cfg: &LayoutConfig,
) -> Result<EditOutcome, ComposeError> {
    apply_edits(pkg, std::slice::from_ref(cmd), graph, bounds, cfg, false)
}

/// Applies a batch of edits in order. The layout is re-solved from the
/// updated graph when `replan` is set or the batch moves more than one
/// object.
pub fn apply_edits(
    pkg: &ScenePackage,
    cmds: &[EditCommand],
    graph: &ConstraintGraph,
    bounds: &HashMap<String, Box3>,
    cfg: &LayoutConfig,
    replan: bool,
) -> Result<EditOutcome, ComposeError> {
    let mut pkg = pkg.clone();
    let mut graph = graph.clone();
    for cmd in cmds {
        apply_one(&mut pkg, &mut graph, cmd, bounds, cfg)?;
    }
    let relocations = cmds.iter().filter(|c| matches!(c, EditCommand::Relocate { .. })).count();
    let replanned = replan || relocations > 1;
    if replanned {
        let layout = solve_layout_with(&graph, bounds, cfg, pkg.seed)?;
        for (id, p) in &layout.placements {
            if let Some(o) = pkg.objects.get_mut(id) {
                o.affine = p.affine();
            }
        }
    }
    let report = verify_layout_with(&pkg.to_layout(), &graph, bounds, cfg);
    Ok(EditOutcome {
        package: pkg,
        graph,
        report,
        replanned,
    })
}

fn apply_one(
    pkg: &mut ScenePackage,
    graph: &mut ConstraintGraph,
    cmd: &EditCommand,
    bounds: &HashMap<String, Box3>,
    cfg: &LayoutConfig,
) -> Result<(), ComposeError> {
    match cmd {
        EditCommand::Relocate { instance, affine } => {
            let o = pkg
                .objects
                .get_mut(instance)
                .ok_or_else(|| ComposeError::UnknownInstance(instance.clone()))?;
            o.affine = *affine;
        }
        EditCommand::Remove { instance } => {
            if pkg.objects.shift_remove(instance).is_none() {
                return Err(ComposeError::UnknownInstance(instance.clone()));
            }
            pkg.trajectories.shift_remove(instance);
            if graph.node_index(instance).is_some() {
                graph.remove_node(instance)?;
            }
        }
        EditCommand::Add {
            node,
            edges,
            asset,
            affine,
        } => {
            if pkg.objects.contains_key(&node.id) {
                return Err(ComposeError::DuplicateInstance(node.id.clone()));
            }
            graph.add_node(node.clone())?;
            for e in edges {
                graph.add_edge(e.clone())?;
            }
            let affine = match affine {
                Some(a) => *a,
                None => {
                    let placed = place_additional(&pkg.to_layout(), graph, bounds, &node.id, cfg)?;
                    placed.placements[&node.id].affine()
                }
            };
            pkg.objects.insert(
                node.id.clone(),
                SceneObject {
                    asset: asset.clone(),
                    affine,
                },
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian;

    fn cloud(points: &[[f64; 3]]) -> GaussianCloud {
        GaussianCloud::new(
            "c",
            points.iter().map(|p| Gaussian::isotropic(Vector3::from(*p), 0.1, 0.5)).collect(),
        )
    }

    #[test]
    fn identity_compose_is_plain_merge() {
        let env = cloud(&[[0.0, 0.0, 0.0]]);
        let a = cloud(&[[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]]);
        let layout = Layout {
            scene: SceneDims::indoor(4.0, 4.0, 3.0).unwrap(),
            seed: 0,
            placements: [("a".to_string(), Placement { s: 1.0, t: [0.0; 3], yaw_radians: 0.0 })].into_iter().collect(),
            deferred: vec![],
        };
        let assets: HashMap<String, GaussianCloud> = [("a".to_string(), a.clone())].into();
        let out = compose_scene(&layout, &assets, &env).unwrap();
        assert_eq!(out.gaussians, merge_clouds(&[env.clone(), a]).gaussians);
        assert!(matches!(
            compose_scene(&layout, &HashMap::new(), &env),
            Err(ComposeError::MissingAsset(id)) if id == "a"
        ));
    }

    #[test]
    fn pose_record_variants() {
        let p: PoseRecord = serde_json::from_str(r#"{"s": 2, "t": [1, 0, 0], "yaw": 1.5707963267948966}"#).unwrap();
        let a = p.to_affine().unwrap();
        assert!((a.yaw() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let both: PoseRecord = serde_json::from_str(r#"{"s": 1, "t": [0, 0, 0], "yaw": 0, "quat": [1, 0, 0, 0]}"#).unwrap();
        assert!(both.to_affine().is_err());
        let bad: PoseRecord = serde_json::from_str(r#"{"s": 0, "t": [0, 0, 0]}"#).unwrap();
        assert!(bad.to_affine().is_err());
    }
}

//! The pipeline stages, each reading and writing files so that `pipeline`
//! and the individual subcommands share one code path.

use std::collections::HashMap;
use std::path::Path;

use anyhow::Context;
use log::{info, warn};
use splatscene::camera::{evaluation_trajectory, plan_cameras, poses_from_jsonl, poses_to_jsonl, CameraPose};
use splatscene::composer::{apply_edits, compose_package, compose_scene_at_time, EditCommand, EditRecord, ScenePackage};
use splatscene::diffusion::{build_schedule, dreamtime_weights, ScheduleKind};
use splatscene::filter::{contribution_scores, filter_cloud, Resolution};
use splatscene::gaussian::{aabb, load_ply, save_ply, Box3, GaussianCloud};
use splatscene::layout::{solve_layout_with, verify_layout_with, Layout, LayoutReport, ViolationKind};
use splatscene::planner::{plan_scene, PlanDocuments, PlannerMode};
use splatscene::spec::{ConstraintGraph, SceneDims};
use splatscene::synthetic::box_cloud;

use crate::config::RunConfig;
use crate::fsio::{parent_dir, read_bytes, read_text, rebase, write_atomic};
use crate::UsageError;

/// Bound extent of the stand-in assets, in standard deviations.
const BOUND_SIGMAS: f64 = 3.0;

pub const PLAN_FILES: [&str; 3] = ["objects.json", "anchors.json", "relations.json"];
pub const STAGE_FILES: [&str; 3] = ["stage1.jsonl", "stage2.jsonl", "stage3.jsonl"];

fn default_scene(cfg: &RunConfig) -> SceneDims {
    cfg.scene.unwrap_or(cfg.planner.scene)
}

/// Box-shaped stand-in clouds, one per instance, in graph order.
pub fn synthetic_assets(graph: &ConstraintGraph, density: usize) -> Vec<(String, GaussianCloud)> {
    graph
        .nodes
        .iter()
        .map(|n| (n.id.clone(), box_cloud(&n.category, n.size, density)))
        .collect()
}

fn bounds_of<'a>(clouds: impl IntoIterator<Item = (&'a String, &'a GaussianCloud)>) -> anyhow::Result<HashMap<String, Box3>> {
    clouds
        .into_iter()
        .map(|(id, c)| Ok((id.clone(), aabb(c, BOUND_SIGMAS).with_context(|| format!("bounds of `{id}`"))?)))
        .collect()
}

pub fn synthetic_bounds(graph: &ConstraintGraph, density: usize) -> anyhow::Result<HashMap<String, Box3>> {
    let assets = synthetic_assets(graph, density);
    bounds_of(assets.iter().map(|(id, c)| (id, c)))
}

fn load_inputs(layout: &Path, graph: &Path) -> anyhow::Result<(Layout, ConstraintGraph)> {
    let l = Layout::from_json(&read_text(layout)?).with_context(|| layout.display().to_string())?;
    let g = ConstraintGraph::from_json(&read_text(graph)?).with_context(|| graph.display().to_string())?;
    Ok((l, g))
}

fn json_line(text: String) -> Vec<u8> {
    let mut b = text.into_bytes();
    b.push(b'\n');
    b
}

fn asset_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.ply")
}

pub fn plan(cfg: &RunConfig, scene_text: &str, constraint: &str, out: &Path) -> anyhow::Result<PlanDocuments> {
    if cfg.planner.mode == PlannerMode::Live {
        info!("planning `{scene_text}` against {}", cfg.planner.endpoint_url);
    } else {
        info!("planning `{scene_text}` from {}", cfg.planner.fixture_path.display());
    }
    let mut pcfg = cfg.planner.clone();
    pcfg.scene = default_scene(cfg);
    let docs = plan_scene(scene_text, constraint, &pcfg)?;
    // Reject documents that would not parse downstream before writing anything.
    docs.graph(pcfg.scene).context("planning documents")?;
    for (name, text) in PLAN_FILES.iter().zip([&docs.objects, &docs.anchors, &docs.relations]) {
        write_atomic(&out.join(name), text.as_bytes())?;
    }
    let scene = docs.scene.unwrap_or(pcfg.scene);
    write_atomic(&out.join("scene.json"), &json_line(serde_json::to_string(&scene)?))?;
    Ok(docs)
}

pub fn layout(cfg: &RunConfig, plan_dir: &Path, layout_out: &Path, graph_out: &Path) -> anyhow::Result<Layout> {
    let docs = splatscene::planner::load_fixture(plan_dir)?;
    let graph = docs.graph(default_scene(cfg)).context("planning documents")?;
    let bounds = synthetic_bounds(&graph, cfg.asset_density)?;
    let layout = solve_layout_with(&graph, &bounds, &cfg.layout, cfg.seed)?;
    for e in &layout.deferred {
        warn!("deferred relation: {} {} {}", e.subject, e.relation.as_str(), e.object);
    }
    info!("placed {} instances", layout.placements.len());
    write_atomic(layout_out, &json_line(layout.to_json()))?;
    write_atomic(graph_out, &json_line(graph.to_json()))?;
    Ok(layout)
}

/// Writes `assets/<id>.ply`, `manifest.json` and the composed `scene.ply`.
pub fn compose(cfg: &RunConfig, layout_path: &Path, graph_path: &Path, out: &Path) -> anyhow::Result<GaussianCloud> {
    let (layout, graph) = load_inputs(layout_path, graph_path)?;
    let assets: HashMap<String, GaussianCloud> = synthetic_assets(&graph, cfg.asset_density).into_iter().collect();
    let mut refs = HashMap::new();
    for node in &graph.nodes {
        let name = format!("assets/{}", asset_file_name(&node.id));
        write_atomic(&out.join(&name), &save_ply(&assets[&node.id])?)?;
        refs.insert(node.id.clone(), name);
    }
    let pkg = ScenePackage::from_layout(&layout, &refs, cfg.environment_spacing)?;
    let scene = compose_package(&pkg, &assets)?;
    info!(
        "composed {} Gaussians ({} environment)",
        scene.len(),
        pkg.environment.len()
    );
    write_atomic(&out.join("manifest.json"), &json_line(pkg.to_manifest_json()))?;
    write_atomic(&out.join("scene.ply"), &save_ply(&scene)?)?;
    Ok(scene)
}

/// Writes the three training stages and the evaluation path as JSON lines.
pub fn cameras(cfg: &RunConfig, layout_path: &Path, graph_path: &Path, out: &Path) -> anyhow::Result<()> {
    let (layout, graph) = load_inputs(layout_path, graph_path)?;
    let bounds = synthetic_bounds(&graph, cfg.asset_density)?;
    let plan = plan_cameras(&layout, &bounds, &cfg.cameras, cfg.seed)?;
    for id in &plan.starved {
        warn!("no collision-free stage-2 pose near `{id}`");
    }
    let stages: [(&str, &[CameraPose]); 3] = [("stage1", &plan.stage1), ("stage2", &plan.stage2), ("stage3", &plan.stage3)];
    for ((stage, poses), file) in stages.iter().zip(STAGE_FILES) {
        info!("{stage}: {} poses", poses.len());
        write_atomic(&out.join(file), poses_to_jsonl(stage, poses).as_bytes())?;
    }
    let eval = evaluation_trajectory(&layout.scene, cfg.cameras.eval_step, cfg.cameras.eval_azimuths, &cfg.cameras)?;
    write_atomic(&out.join("eval.jsonl"), poses_to_jsonl("eval", &eval).as_bytes())?;
    Ok(())
}

pub fn filter(cfg: &RunConfig, cloud_path: &Path, poses_path: &Path, out: &Path, scores_out: Option<&Path>) -> anyhow::Result<GaussianCloud> {
    let cloud = load_ply(&read_bytes(cloud_path)?).with_context(|| cloud_path.display().to_string())?;
    let poses: Vec<CameraPose> = poses_from_jsonl(&read_text(poses_path)?)
        .with_context(|| poses_path.display().to_string())?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    let res = Resolution::square(cfg.resolution)?;
    let scores = contribution_scores(&cloud, &poses, res)?;
    let kept = filter_cloud(&cloud, &scores, cfg.eta)?;
    info!(
        "kept {} of {} Gaussians over {} poses (eta {})",
        kept.len(),
        cloud.len(),
        poses.len(),
        cfg.eta
    );
    if let Some(path) = scores_out {
        write_atomic(path, scores.to_csv().as_bytes())?;
    }
    write_atomic(out, &save_ply(&kept)?)?;
    Ok(kept)
}

/// Checks a layout; returns the report and whether it counts as a failure.
pub fn verify(cfg: &RunConfig, layout_path: &Path, graph_path: &Path, strict: bool) -> anyhow::Result<(LayoutReport, bool)> {
    let (layout, graph) = load_inputs(layout_path, graph_path)?;
    let bounds = synthetic_bounds(&graph, cfg.asset_density)?;
    let report = verify_layout_with(&layout, &graph, &bounds, &cfg.layout);
    let failed = if strict {
        !report.is_empty()
    } else {
        report.hard().next().is_some()
    };
    for kind in [ViolationKind::Collision, ViolationKind::Anchor, ViolationKind::Bounds, ViolationKind::Relation] {
        let n = report.count(kind);
        if n > 0 {
            warn!("{n} {kind:?} violation(s)");
        }
    }
    Ok((report, failed))
}

pub struct EditPaths<'a> {
    pub manifest: &'a Path,
    pub graph: &'a Path,
    pub edits: &'a Path,
    pub manifest_out: &'a Path,
    pub graph_out: &'a Path,
    pub scene_out: Option<&'a Path>,
}

/// Applies an edit batch. Asset paths in the written manifest are rebased
/// onto its directory.
pub fn edit(cfg: &RunConfig, paths: &EditPaths, replan: bool) -> anyhow::Result<LayoutReport> {
    let pkg = ScenePackage::from_manifest_json(&read_text(paths.manifest)?).with_context(|| paths.manifest.display().to_string())?;
    let graph = ConstraintGraph::from_json(&read_text(paths.graph)?).with_context(|| paths.graph.display().to_string())?;
    let records: Vec<EditRecord> = serde_json::from_str(&read_text(paths.edits)?)
        .map_err(|e| UsageError(format!("{}: {e}", paths.edits.display())))?;
    let cmds = records
        .into_iter()
        .map(EditCommand::try_from)
        .collect::<Result<Vec<_>, _>>()?;
    let base = parent_dir(paths.manifest);
    let mut assets = pkg.load_assets(&base)?;
    for cmd in &cmds {
        if let EditCommand::Add { node, asset, .. } = cmd {
            let path = base.join(asset);
            let cloud = load_ply(&read_bytes(&path)?).with_context(|| path.display().to_string())?;
            assets.insert(node.id.clone(), cloud);
        }
    }
    let bounds = bounds_of(assets.iter())?;
    let outcome = apply_edits(&pkg, &cmds, &graph, &bounds, &cfg.layout, replan)?;
    if outcome.replanned {
        info!("layout re-solved");
    }
    let mut written = outcome.package.clone();
    let out_dir = parent_dir(paths.manifest_out);
    for o in written.objects.values_mut() {
        o.asset = rebase(&o.asset, &base, &out_dir)?;
    }
    if let Some(scene_out) = paths.scene_out {
        let live: HashMap<String, GaussianCloud> = assets
            .into_iter()
            .filter(|(id, _)| outcome.package.objects.contains_key(id))
            .collect();
        write_atomic(scene_out, &save_ply(&compose_package(&outcome.package, &live)?)?)?;
    }
    write_atomic(paths.manifest_out, &json_line(written.to_manifest_json()))?;
    write_atomic(paths.graph_out, &json_line(outcome.graph.to_json()))?;
    Ok(outcome.report)
}

/// Composes one PLY per requested time as `frame-NNN.ply`.
pub fn animate(manifest: &Path, trajectories: Option<&Path>, times: &[f64], out: &Path) -> anyhow::Result<()> {
    let mut pkg = ScenePackage::from_manifest_json(&read_text(manifest)?).with_context(|| manifest.display().to_string())?;
    if let Some(path) = trajectories {
        pkg.attach_trajectories_json(&read_text(path)?)
            .with_context(|| path.display().to_string())?;
    }
    if pkg.trajectories.is_empty() {
        warn!("no trajectories: every frame is the static scene");
    }
    let assets = pkg.load_assets(&parent_dir(manifest))?;
    for (i, &t) in times.iter().enumerate() {
        let frame = compose_scene_at_time(&pkg, &assets, t)?;
        write_atomic(&out.join(format!("frame-{i:03}.ply")), &save_ply(&frame)?)?;
    }
    let index = serde_json::json!({ "times": times });
    write_atomic(&out.join("frames.json"), &json_line(serde_json::to_string_pretty(&index)?))?;
    Ok(())
}

pub struct ScheduleArgs {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// `t,alpha_bar,weight` rows for t = 0..=T; the weight at t = 0 is 0.
pub fn schedule_csv(a: &ScheduleArgs) -> anyhow::Result<String> {
    let sched = build_schedule(a.kind, a.steps, a.beta_start, a.beta_end)?;
    let weights = dreamtime_weights(a.mu, a.sigma, &sched)?;
    let mut out = String::from("t,alpha_bar,weight\n");
    for (t, ab) in sched.alpha_bar.iter().enumerate() {
        let w = if t == 0 { 0.0 } else { weights[t - 1] };
        out.push_str(&format!("{t},{ab},{w}\n"));
    }
    Ok(out)
}

pub struct PipelineOutputs {
    pub composed: std::path::PathBuf,
    pub filtered: std::path::PathBuf,
}

/// plan → layout → compose → cameras → filter, each through its files.
pub fn pipeline(cfg: &RunConfig, scene_text: &str, constraint: &str, out: &Path) -> anyhow::Result<PipelineOutputs> {
    let plan_dir = out.join("plan");
    plan(cfg, scene_text, constraint, &plan_dir)?;
    let (layout_path, graph_path) = (out.join("layout.json"), out.join("graph.json"));
    layout(cfg, &plan_dir, &layout_path, &graph_path)?;
    let compose_dir = out.join("compose");
    compose(cfg, &layout_path, &graph_path, &compose_dir)?;
    let camera_dir = out.join("cameras");
    cameras(cfg, &layout_path, &graph_path, &camera_dir)?;
    let composed = compose_dir.join("scene.ply");
    let filtered = out.join("filtered.ply");
    filter(cfg, &composed, &camera_dir.join(STAGE_FILES[2]), &filtered, Some(&out.join("scores.csv")))?;
    Ok(PipelineOutputs { composed, filtered })
}

//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatscene::camera::*;
use splatscene::composer::{sample_trajectory, Keyframe, MotionTrajectory, ScenePackage};
use splatscene::diffusion::*;
use splatscene::filter::*;
use splatscene::gaussian::{aabb, load_ply, save_ply, AffineTransform, Box3, Gaussian, GaussianCloud};
use splatscene::layout::{solve_layout, verify_layout, Layout, LayoutError};
use splatscene::planner::load_fixture;
use splatscene::spec::{ConstraintGraph, SceneDims};
use splatscene::synthetic::{box_cloud, random_graph};

#[path = "../../core/tests/support/mod.rs"]
mod support;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture_graph(name: &str) -> Result<ConstraintGraph, String> {
    let docs = load_fixture(&repo().join("fixtures").join(name)).map_err(|e| e.to_string())?;
    docs.graph(SceneDims::indoor(6.0, 5.0, 3.0).unwrap()).map_err(|e| e.to_string())
}

fn box_bounds(g: &ConstraintGraph) -> HashMap<String, Box3> {
    g.nodes
        .iter()
        .map(|n| (n.id.clone(), aabb(&box_cloud(&n.category, n.size, 6), 3.0).unwrap()))
        .collect()
}

fn layout_soundness() -> Outcome {
    let mut graphs = vec![("living-room".to_string(), fixture_graph("living-room")?)];
    ensure!(graphs[0].1.nodes.len() == 7, "living room has {} instances", graphs[0].1.nodes.len());
    for seed in 0..12u64 {
        let n = 3 + (seed as usize * 5) % 10;
        graphs.push((format!("random seed {seed}, n {n}"), random_graph(seed, n, seed % 2 == 1)));
    }
    let mut slowest = 0.0f64;
    for (name, g) in &graphs {
        let bounds = box_bounds(g);
        let t0 = Instant::now();
        let layout = solve_layout(g, &bounds, 0.25, 0).map_err(|e| format!("{name}: {e}"))?;
        let dt = t0.elapsed().as_secs_f64();
        slowest = slowest.max(dt);
        ensure!(dt < 1.0, "{name}: solve took {dt:.3} s");
        let report = verify_layout(&layout, g, &bounds);
        ensure!(report.hard().count() == 0, "{name}: {:?}", report.hard().collect::<Vec<_>>());
        let again = solve_layout(g, &bounds, 0.25, 0).map_err(|e| e.to_string())?;
        ensure!(layout.to_json() == again.to_json(), "{name}: JSON differs between runs");
    }
    Ok(format!("{} scenes, slowest solve {:.0} ms", graphs.len(), slowest * 1e3))
}

fn oracle_completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let (mut satisfiable, mut total) = (0, 0);
    for i in 0..300 {
        let g = support::random_micro(&mut rng);
        let assets = support::exact_assets(&g);
        let grid = support::coarse_grid(&g);
        total += 1;
        if !support::oracle_feasible(&g, &assets, grid) {
            continue;
        }
        satisfiable += 1;
        match solve_layout(&g, &assets, grid, 0) {
            Ok(layout) => {
                let r = verify_layout(&layout, &g, &assets);
                ensure!(r.hard().count() == 0, "instance {i}: solver layout has violations");
            }
            Err(LayoutError::Infeasible(m)) => return Err(format!("instance {i}: solver gave up ({m}) but search found a layout")),
            Err(e) => return Err(format!("instance {i}: {e}")),
        }
    }
    ensure!(satisfiable > 0, "no satisfiable instance generated");
    Ok(format!("{satisfiable}/{satisfiable} satisfiable instances solved ({total} generated)"))
}

fn random_filter_instance(rng: &mut ChaCha8Rng) -> (GaussianCloud, Vec<CameraPose>, Resolution) {
    let n = rng.random_range(1..=1000);
    let gaussians = (0..n)
        .map(|_| {
            let mut g = Gaussian::isotropic(
                Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..3.0)),
                0.1,
                rng.random_range(0.0..1.0),
            );
            g.scale = Vector3::new(rng.random_range(0.01..0.3), rng.random_range(0.01..0.3), rng.random_range(0.01..0.3));
            g.rotation = UnitQuaternion::from_euler_angles(rng.random(), rng.random(), rng.random());
            g
        })
        .collect();
    let poses = (0..rng.random_range(1..=4))
        .map(|_| CameraPose {
            position: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)],
            yaw: rng.random_range(0.0..TAU),
            pitch: rng.random_range(-1.2..0.6),
            fov: rng.random_range(0.6..1.6),
        })
        .collect();
    let side = if rng.random_bool(0.5) { 32 } else { 64 };
    (GaussianCloud::new("r", gaussians), poses, Resolution::square(side).unwrap())
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn filter_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let (cloud, poses, res) = random_filter_instance(&mut rng);
        let fast = contribution_scores(&cloud, &poses, res).map_err(|e| e.to_string())?;
        let slow = brute_force_scores(&cloud, &poses, res).map_err(|e| e.to_string())?;
        for (a, b) in fast.scores.iter().zip(&slow.scores) {
            ensure!(rel_close(*a, *b, 1e-9), "case {case}: {a} vs {b}");
            if a != b {
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
            }
        }
        let eta = [0.1, 0.25, 0.5][case % 3];
        let kept = filter_cloud(&cloud, &fast, eta).map_err(|e| e.to_string())?;
        let removed = (eta * cloud.len() as f64 - 1e-9).ceil() as usize;
        let mut rank: Vec<usize> = (0..cloud.len()).collect();
        rank.sort_by(|&a, &b| fast.scores[b].total_cmp(&fast.scores[a]).then(a.cmp(&b)));
        let mut top = rank[..cloud.len() - removed].to_vec();
        top.sort();
        let want: Vec<Gaussian> = top.iter().map(|&i| cloud.gaussians[i].clone()).collect();
        ensure!(kept.gaussians == want, "case {case}: kept set is not the top-(1-eta) set");
    }
    let dt = t0.elapsed().as_secs_f64();
    ensure!(dt < 60.0, "suite took {dt:.1} s");
    Ok(format!("50 instances, worst relative gap {worst:.1e}, {dt:.2} s"))
}

fn score_structure() -> Outcome {
    let pose = CameraPose {
        position: [0.0, 0.0, 1.0],
        yaw: 0.0,
        pitch: 0.0,
        fov: 60f64.to_radians(),
    };
    let one = GaussianCloud::new("one", vec![Gaussian::isotropic(Vector3::new(0.0, 2.0, 1.0), 0.3, 0.5)]);
    let s = contribution_scores(&one, &[pose], Resolution::default()).map_err(|e| e.to_string())?;
    ensure!(s.scores == vec![0.25], "depth-2 score {:?}", s.scores);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let (cloud, poses, res) = random_filter_instance(&mut rng);
        let base = contribution_scores(&cloud, &poses, res).map_err(|e| e.to_string())?;
        let factor = rng.random_range(0.1..10.0);
        let mut scaled = cloud.clone();
        for g in &mut scaled.gaussians {
            g.scale *= factor;
        }
        let after = contribution_scores(&scaled, &poses, res).map_err(|e| e.to_string())?;
        for (a, b) in base.scores.iter().zip(&after.scores) {
            ensure!(rel_close(*a, *b, 1e-9), "scale {factor}: {a} vs {b}");
        }
    }
    Ok("depth 2 scores 0.25; 10 rescaled clouds unchanged".into())
}

fn lat(v: Vec<f64>) -> LatentState {
    LatentState::from_vec(v)
}

fn random_latent(rng: &mut ChaCha8Rng, n: usize) -> LatentState {
    lat((0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
}

fn rel_err(a: &LatentState, b: &LatentState) -> f64 {
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.norm().max(1e-300)
}

fn nonlinear(x: &LatentState, t: usize, p: PromptId) -> LatentState {
    let shift = if p.is_empty() { 0.0 } else { 0.3 };
    lat(x
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| (0.8 * v + 0.1 * k as f64).sin() + 0.5 * (t as f64 / 400.0).cos() + shift)
        .collect())
}

fn round_trip(pred: &dyn NoisePredictor, x: &LatentState, ts: &[usize], delta: Option<usize>) -> Result<f64, String> {
    let s = ScheduleTable::standard();
    let up = invert_chain(x, ts, pred, PromptId::EMPTY, &s, delta).map_err(|e| e.to_string())?;
    let down = denoise_chain(up.last().unwrap(), ts, pred, PromptId::EMPTY, &s, delta).map_err(|e| e.to_string())?;
    Ok(rel_err(&down[0], x))
}

fn schedule_identities() -> Outcome {
    let s = ScheduleTable::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let t = rng.random_range(1..=1000);
        let (x0, e) = (random_latent(&mut rng, 8), random_latent(&mut rng, 8));
        let noised = add_noise(&x0, &e, t, &s).map_err(|e| e.to_string())?;
        let back = pseudo_ground_truth(&noised, &e, t, &s).map_err(|e| e.to_string())?;
        for (a, b) in back.values.iter().zip(&x0.values) {
            ensure!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }
    let mut worst = 0.0f64;
    for len in 2..=20 {
        for _ in 0..5 {
            let c = random_latent(&mut rng, 6);
            let x = random_latent(&mut rng, 6);
            let mut ts: Vec<usize> = rand::seq::index::sample(&mut rng, 1000, len).into_iter().map(|t| t + 1).collect();
            ts.sort();
            let pred = move |_: &LatentState, _: usize, _: PromptId| c.clone();
            let err = round_trip(&pred, &x, &ts, None)?;
            worst = worst.max(err);
            ensure!(err <= 1e-6, "chain of {len}: error {err:.2e}");
        }
    }
    let x = random_latent(&mut ChaCha8Rng::seed_from_u64(2024), 8);
    let ts = [100, 300, 500, 700, 900];
    let e: Vec<f64> = [100, 50, 25]
        .into_iter()
        .map(|d| round_trip(&nonlinear, &x, &ts, Some(d)))
        .collect::<Result<_, _>>()?;
    ensure!(e[2] < e[1] && e[1] < e[0], "errors at dT 100/50/25: {e:?}");
    Ok(format!(
        "inverse exact, constant chains <= {worst:.1e}, dT 100/50/25 errors {:.2e} > {:.2e} > {:.2e}",
        e[0], e[1], e[2]
    ))
}

fn mts_reductions() -> Outcome {
    let s = ScheduleTable::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bits = |l: &LatentState| l.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let y = PromptId::user(0);
    for _ in 0..50 {
        let x0 = random_latent(&mut rng, 7);
        let t = rng.random_range(1..=1000);
        let w = rng.random_range(-3.0..3.0);
        let traj = build_mts_trajectory(&x0, &[t], &nonlinear, PromptId::EMPTY, &s, Some(50)).map_err(|e| e.to_string())?;
        let got = mts_direction(&traj, &nonlinear, y, PromptId::EMPTY, &[w]).map_err(|e| e.to_string())?;
        let xt = &traj.latents[0];
        let want = guidance_direction(&nonlinear(xt, t, y), &nonlinear(xt, t, PromptId::EMPTY), w).map_err(|e| e.to_string())?;
        ensure!(bits(&got) == bits(&want), "m=1 differs at t={t}");
    }
    for _ in 0..50 {
        let m = rng.random_range(1..6);
        let x0 = random_latent(&mut rng, 5);
        let ts = sample_timesteps_rng(1000, m, &mut rng).map_err(|e| e.to_string())?;
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
        let scale = rng.random_range(-4.0..4.0);
        let traj = build_mts_trajectory(&x0, &ts, &nonlinear, PromptId::EMPTY, &s, None).map_err(|e| e.to_string())?;
        let base = mts_direction(&traj, &nonlinear, y, PromptId::EMPTY, &w).map_err(|e| e.to_string())?;
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let scaled = mts_direction(&traj, &nonlinear, y, PromptId::EMPTY, &ws).map_err(|e| e.to_string())?;
        for k in 0..5 {
            let tol = 1e-12 * (1.0 + base.values[k].abs() * scale.abs());
            ensure!((scaled.values[k] - scale * base.values[k]).abs() <= tol, "weights not linear");
        }
        let zero = mts_direction(&traj, &nonlinear, y, y, &w).map_err(|e| e.to_string())?;
        ensure!(zero.values.iter().all(|&v| v == 0.0), "equal prompts gave {:?}", zero.values);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let t_end = rng.random_range(4..=1000usize);
        let ts = sample_timesteps_rng(t_end, 4, &mut rng).map_err(|e| e.to_string())?;
        let mut hits = [0usize; 4];
        for &t in &ts {
            ensure!(t >= 1 && t <= t_end, "{t} outside [1, {t_end}]");
            let q = ((4 * t).div_ceil(t_end)).clamp(1, 4) - 1;
            hits[q] += 1;
        }
        ensure!(hits == [1, 1, 1, 1], "T={t_end}: {ts:?}");
    }
    Ok("m=1 bit-identical, zero for equal prompts, linear weights, 10^4 stratified draws".into())
}

fn dreamtime_normalization() -> Outcome {
    let tables = [
        ScheduleTable::standard(),
        build_schedule(ScheduleKind::Linear, 1000, 0.0001, 0.02).map_err(|e| e.to_string())?,
        build_schedule(ScheduleKind::Linear, 500, 0.0005, 0.03).map_err(|e| e.to_string())?,
    ];
    let combos = [(500.0, 250.0, 0), (500.0, 250.0, 1), (300.0, 80.0, 0), (800.0, 400.0, 1), (250.0, 50.0, 2)];
    let mut worst = 0.0f64;
    for (mu, sigma, k) in combos {
        let w = dreamtime_weights(mu, sigma, &tables[k]).map_err(|e| e.to_string())?;
        let total = neumaier_sum(w.iter().copied());
        worst = worst.max((total - 1.0).abs());
        ensure!((total - 1.0).abs() <= 1e-12, "mu {mu} sigma {sigma}: sum {total}");
    }
    Ok(format!("5 combinations, worst |sum - 1| = {worst:.1e}"))
}

fn inside_any(p: &Vector3<f64>, layout: &Layout, bounds: &HashMap<String, Box3>, inflation: f64) -> bool {
    layout.placements.iter().any(|(id, pl)| {
        let a = pl.affine();
        let corners: Vec<Vector3<f64>> = bounds[id].corners().iter().map(|c| a.apply_point(c)).collect();
        (0..3).all(|k| {
            let lo = corners.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min) - inflation;
            let hi = corners.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max) + inflation;
            p[k] >= lo && p[k] <= hi
        })
    })
}

fn camera_properties() -> Outcome {
    let cfg = CameraConfig::default();
    let mut graphs = vec![fixture_graph("living-room")?, fixture_graph("bedroom")?, fixture_graph("park")?];
    graphs.extend((0..6).map(|s| random_graph(s, 4 + s as usize, s % 2 == 1)));
    let mut checked = 0;
    for g in &graphs {
        let bounds = box_bounds(g);
        let layout = solve_layout(g, &bounds, 0.25, 0).map_err(|e| e.to_string())?;
        let plan = plan_cameras(&layout, &bounds, &cfg, 5).map_err(|e| e.to_string())?;
        for p in plan.stage1.iter().chain(&plan.stage2).chain(&plan.stage3) {
            ensure!(!inside_any(&p.position(), &layout, &bounds, cfg.inflation), "pose inside an object at {:?}", p.position);
            checked += 1;
        }
        if layout.scene.is_outdoor() {
            continue;
        }
        let centers = object_centers(&layout, &bounds).map_err(|e| e.to_string())?;
        let pts: Vec<Vector2<f64>> = centers.values().copied().collect();
        for (k, id) in centers.keys().enumerate() {
            let covered = plan.stage2.iter().any(|p| {
                let xy = Vector2::new(p.position[0], p.position[1]);
                let d = |j: usize| (xy - pts[j]).norm();
                (0..pts.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))) == Some(k)
            });
            ensure!(covered, "Voronoi region of `{id}` has no stage-2 pose");
        }
    }
    let scene = SceneDims::outdoor(12.0).unwrap();
    let poses = sample_stage2_outdoor(&scene, 4, 6, 3, &cfg).map_err(|e| e.to_string())?;
    for batch in poses.chunks(4) {
        let theta = batch[0].position[1].atan2(batch[0].position[0]);
        for p in batch {
            ensure!((p.position[1].atan2(p.position[0]) - theta).abs() <= 1e-9, "batch azimuths differ");
        }
    }
    for scene in [SceneDims::indoor(6.0, 5.0, 3.0).unwrap(), SceneDims::outdoor(9.0).unwrap()] {
        let want = 4.0 / 3.0 * scene.radius();
        let eval = evaluation_trajectory(&scene, 0.25, 4, &cfg).map_err(|e| e.to_string())?;
        let on_circle = eval
            .iter()
            .filter(|p| (Vector2::new(p.position[0], p.position[1]).norm() - want).abs() <= 1e-9)
            .count();
        ensure!((eval_circle_radius(&scene) - want).abs() <= 1e-9 && on_circle >= 3, "eval circle radius");
    }
    Ok(format!("{checked} poses clear of inflated boxes, every indoor region covered"))
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cloud = box_cloud("chair", [0.5, 0.5, 0.9], 6);
    for g in &mut cloud.gaussians {
        g.rotation = UnitQuaternion::from_euler_angles(rng.random(), rng.random(), rng.random());
        g.sh_rest.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let bytes = save_ply(&cloud).map_err(|e| e.to_string())?;
    let loaded = load_ply(&bytes).map_err(|e| e.to_string())?;
    ensure!(save_ply(&loaded).map_err(|e| e.to_string())? == bytes, "PLY save-load-save changed bytes");

    let g = fixture_graph("living-room")?;
    let bounds = box_bounds(&g);
    let layout = solve_layout(&g, &bounds, 0.25, 0).map_err(|e| e.to_string())?;
    let refs = g.nodes.iter().map(|n| (n.id.clone(), format!("assets/{}.ply", n.id))).collect();
    let mut pkg = ScenePackage::from_layout(&layout, &refs, 0.5).map_err(|e| e.to_string())?;
    let kf = |time, x| Keyframe {
        time,
        affine: AffineTransform::from_yaw(1.0, 0.3, Vector3::new(x, 0.0, 0.0)).unwrap(),
    };
    let tr = MotionTrajectory::new(vec![kf(0.0, 0.0), kf(2.0, 1.0)]).map_err(|e| e.to_string())?;
    pkg.set_trajectory("sofa1", tr).map_err(|e| e.to_string())?;
    let back = ScenePackage::from_manifest_json(&pkg.to_manifest_json()).map_err(|e| e.to_string())?;
    ensure!(back == pkg, "manifest round trip changed the package");

    let mut parsed = 0;
    for entry in std::fs::read_dir(repo().join("fixtures")).map_err(|e| e.to_string())? {
        let dir = entry.map_err(|e| e.to_string())?.path();
        let docs = load_fixture(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        docs.graph(SceneDims::indoor(6.0, 5.0, 3.0).unwrap())
            .map_err(|e| format!("{}: {e}", dir.display()))?;
        parsed += 1;
    }
    Ok(format!("PLY bytes stable, manifest identical, {parsed} fixtures parse"))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = repo().join("fixtures/living-room");
    let run = |out: &Path| -> Result<f64, String> {
        let t0 = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_splatscene"))
            .args(["--quiet", "pipeline", "--scene", "a living room", "--eta", "0.1", "--fixture"])
            .arg(&fixture)
            .arg("--out")
            .arg(out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "pipeline exited with {status}");
        Ok(t0.elapsed().as_secs_f64())
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let dt = run(&a)?;
    ensure!(dt < 10.0, "pipeline took {dt:.1} s");
    run(&b)?;
    let outputs = [
        "compose/scene.ply",
        "cameras/stage1.jsonl",
        "cameras/stage2.jsonl",
        "cameras/stage3.jsonl",
        "filtered.ply",
    ];
    for f in outputs {
        let (x, y) = (std::fs::read(a.join(f)), std::fs::read(b.join(f)));
        let (x, y) = (x.map_err(|e| format!("{f}: {e}"))?, y.map_err(|e| format!("{f}: {e}"))?);
        ensure!(!x.is_empty(), "{f} is empty");
        ensure!(x == y, "{f} differs on rerun");
    }
    let read = |f: &str| load_ply(&std::fs::read(a.join(f)).unwrap()).map_err(|e| e.to_string());
    let (composed, filtered) = (read("compose/scene.ply")?, read("filtered.ply")?);
    let removed = (0.1 * composed.len() as f64 - 1e-9).ceil() as usize;
    ensure!(filtered.len() == composed.len() - removed, "filtered count {}", filtered.len());
    Ok(format!(
        "{} -> {} Gaussians in {:.2} s, rerun byte-identical",
        composed.len(),
        filtered.len(),
        dt
    ))
}

fn motion_sampling() -> Outcome {
    let kf = |time, x, yaw| Keyframe {
        time,
        affine: AffineTransform::from_yaw(1.0, yaw, Vector3::new(x, 0.0, 0.0)).unwrap(),
    };
    let tr = MotionTrajectory::new(vec![kf(0.0, 0.0, 0.0), kf(1.0, 2.0, FRAC_PI_2), kf(3.0, 2.0, 0.0)]).map_err(|e| e.to_string())?;
    for k in tr.keyframes() {
        ensure!(sample_trajectory(&tr, k.time) == k.affine, "keyframe at {} not hit exactly", k.time);
    }
    ensure!(sample_trajectory(&tr, -1.0) == tr.keyframes()[0].affine, "no clamp before start");
    ensure!(sample_trajectory(&tr, 10.0) == tr.keyframes()[2].affine, "no clamp after end");
    let mid = sample_trajectory(&tr, 0.5);
    ensure!((mid.t - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9, "midpoint translation {:?}", mid.t);
    ensure!((mid.yaw() - FRAC_PI_4).abs() < 1e-9, "midpoint yaw {}", mid.yaw());
    let late = sample_trajectory(&tr, 2.0);
    ensure!((late.yaw() - FRAC_PI_4).abs() < 1e-9 && (late.t.x - 2.0).abs() < 1e-9, "second segment midpoint");
    Ok("keyframes exact, clamped, midpoints match".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("layout soundness", layout_soundness),
        ("layout completeness vs exhaustive search", oracle_completeness),
        ("filter oracle equivalence", filter_oracle),
        ("contribution score structure", score_structure),
        ("schedule identities", schedule_identities),
        ("multi-step sampling reductions", mts_reductions),
        ("time-prior weight normalization", dreamtime_normalization),
        ("camera plan properties", camera_properties),
        ("persistence", persistence),
        ("end-to-end pipeline", end_to_end),
        ("4D trajectory sampling", motion_sampling),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

mod config;
mod fsio;
mod steps;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use splatscene::diffusion::{ScheduleKind, DEFAULT_MU, DEFAULT_SIGMA, DEFAULT_T};
use splatscene::planner::PlannerMode;
use splatscene::spec::SceneDims;

use crate::config::{parse_dims, RunConfig};
use crate::fsio::write_atomic;

/// Bad arguments or configuration; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "splatscene", version, about = "Plan, lay out, compose, film and prune Gaussian scenes")]
struct Cli {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the subcommands that read or build a layout.
#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per unit edge of the stand-in box assets.
    #[arg(long)]
    asset_density: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct PlanFlags {
    /// Scene description passed to the planner.
    #[arg(long)]
    scene: String,
    /// Extra user constraint appended to the prompts.
    #[arg(long, default_value = "")]
    constraint: String,
    /// Directory with recorded planner replies.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Query the configured chat endpoint instead of a fixture.
    #[arg(long, conflicts_with = "fixture")]
    live: bool,
    /// Scene extent as WxLxH (indoor) or a radius (outdoor) when the
    /// planner does not provide one.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<SceneDims>,
}

#[derive(Subcommand)]
enum Command {
    /// Produce the object, anchor and relation documents.
    Plan {
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a layout from planning documents.
    Layout {
        /// Directory holding objects.json, anchors.json, relations.json.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the constraint graph.
        #[arg(long)]
        graph_out: PathBuf,
        #[arg(long)]
        grid: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Write stand-in assets, the scene manifest and the composed PLY.
    Compose {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Environment lattice spacing, meters.
        #[arg(long)]
        spacing: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Write stage 1–3 training poses and the evaluation path.
    Cameras {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score Gaussians over a pose set and drop the lowest fraction.
    Filter {
        #[arg(long)]
        input: PathBuf,
        /// JSON-lines pose file.
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        /// Also write per-Gaussian scores as CSV.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Apply relocate/add/remove edits to a scene manifest.
    Edit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// JSON array of edit records.
        #[arg(long)]
        edits: PathBuf,
        /// Edited manifest (default: overwrite the input).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Edited graph (default: overwrite the input).
        #[arg(long)]
        graph_out: Option<PathBuf>,
        /// Also write the composed scene.
        #[arg(long)]
        scene_out: Option<PathBuf>,
        /// Re-solve the whole layout after editing.
        #[arg(long)]
        replan: bool,
    },
    /// Compose frames of an animated scene.
    Animate {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON array of trajectories to attach.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Sample time; repeat for several frames.
        #[arg(long = "time", required = true, allow_negative_numbers = true)]
        times: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a layout for collisions, anchors, bounds and relations.
    Verify {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Count relation violations as failures too.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Print the noise schedule and time-prior weights as CSV.
    ScheduleDump {
        #[arg(long, value_enum, default_value = "scaled-linear")]
        kind: KindArg,
        #[arg(long, default_value_t = DEFAULT_T)]
        steps: usize,
        #[arg(long, default_value_t = 0.00085)]
        beta_start: f64,
        #[arg(long, default_value_t = 0.012)]
        beta_end: f64,
        #[arg(long, default_value_t = DEFAULT_MU)]
        mu: f64,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// plan → layout → compose → cameras → filter into one directory.
    Pipeline {
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        spacing: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Linear,
    ScaledLinear,
}

impl From<KindArg> for ScheduleKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Linear => ScheduleKind::Linear,
            KindArg::ScaledLinear => ScheduleKind::ScaledLinear,
        }
    }
}

fn set<T: Copy>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.asset_density, c.asset_density);
}

fn apply_plan(cfg: &mut RunConfig, p: &PlanFlags) -> Result<(), UsageError> {
    if let Some(dir) = &p.fixture {
        cfg.planner.mode = PlannerMode::Fixture;
        cfg.planner.fixture_path = dir.clone();
    }
    if p.live {
        cfg.planner.mode = PlannerMode::Live;
    }
    if cfg.planner.mode == PlannerMode::Fixture && cfg.planner.fixture_path.as_os_str().is_empty() {
        return Err(UsageError("fixture mode needs --fixture or planner.fixture_path".into()));
    }
    if p.dims.is_some() {
        cfg.scene = p.dims;
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Plan { plan, out } => {
            apply_plan(&mut cfg, plan)?;
            cfg.check()?;
            steps::plan(&cfg, &plan.scene, &plan.constraint, out)?;
        }
        Command::Layout { plan, out, graph_out, grid, common } => {
            apply_common(&mut cfg, common);
            set(&mut cfg.layout.grid, *grid);
            cfg.check()?;
            steps::layout(&cfg, plan, out, graph_out)?;
        }
        Command::Compose { layout, graph, out, spacing, common } => {
            apply_common(&mut cfg, common);
            set(&mut cfg.environment_spacing, *spacing);
            cfg.check()?;
            steps::compose(&cfg, layout, graph, out)?;
        }
        Command::Cameras { layout, graph, out, common } => {
            apply_common(&mut cfg, common);
            cfg.check()?;
            steps::cameras(&cfg, layout, graph, out)?;
        }
        Command::Filter { input, poses, out, eta, resolution, scores } => {
            set(&mut cfg.eta, *eta);
            set(&mut cfg.resolution, *resolution);
            cfg.check()?;
            steps::filter(&cfg, input, poses, out, scores.as_deref())?;
        }
        Command::Edit { manifest, graph, edits, out, graph_out, scene_out, replan } => {
            cfg.check()?;
            let paths = steps::EditPaths {
                manifest,
                graph,
                edits,
                manifest_out: out.as_deref().unwrap_or(manifest),
                graph_out: graph_out.as_deref().unwrap_or(graph),
                scene_out: scene_out.as_deref(),
            };
            let report = steps::edit(&cfg, &paths, *replan)?;
            print_json(&report)?;
        }
        Command::Animate { manifest, trajectories, times, out } => {
            steps::animate(manifest, trajectories.as_deref(), times, out)?;
        }
        Command::Verify { layout, graph, strict, common } => {
            apply_common(&mut cfg, common);
            cfg.check()?;
            let (report, failed) = steps::verify(&cfg, layout, graph, *strict)?;
            print_json(&report)?;
            if failed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::ScheduleDump { kind, steps: t, beta_start, beta_end, mu, sigma, out } => {
            let args = steps::ScheduleArgs {
                kind: (*kind).into(),
                steps: *t,
                beta_start: *beta_start,
                beta_end: *beta_end,
                mu: *mu,
                sigma: *sigma,
            };
            let csv = steps::schedule_csv(&args).map_err(|e| UsageError(e.to_string()))?;
            match out {
                Some(path) => write_atomic(path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
        Command::Pipeline { plan, out, grid, eta, resolution, spacing, common } => {
            apply_plan(&mut cfg, plan)?;
            apply_common(&mut cfg, common);
            set(&mut cfg.layout.grid, *grid);
            set(&mut cfg.eta, *eta);
            set(&mut cfg.resolution, *resolution);
            set(&mut cfg.environment_spacing, *spacing);
            cfg.check()?;
            let outputs = steps::pipeline(&cfg, &plan.scene, &plan.constraint, out)?;
            log::info!("composed {}, filtered {}", show(&outputs.composed), show(&outputs.filtered));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info })
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

//! Subcommand implementations. Each takes parsed arguments and the effective
//! [`RunConfig`], does its file I/O and returns what it wants printed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cellmap_core::eval::{
    cloud_distance, depth_noise_stats, distance_table, fp_fn_count, noise_table, percentile_table,
    symmetric_cloud_distance, PixelRegion,
};
use cellmap_core::geom::io::{read_cloud, write_cloud, write_mesh};
use cellmap_core::geom::{AxisAlignedBox, Point3, RigidTransform, Vector3};
use cellmap_core::occupancy::{pad, read_grid, write_grid};
use cellmap_core::referencing::{reference, RobotModel};
use cellmap_core::registration::{read_frames, write_frames, IcpResult};
use cellmap_core::synth::{build_scene, render_frames, SceneSpec, Trajectory};
use cellmap_core::workflow::{grid_from_map, map_frames};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// File names written by `synth` inside its output directory.
pub mod layout {
    pub const FRAMES: &str = "frames";
    pub const TRUTH_GRID: &str = "truth_grid.json";
    pub const TRUTH_SOLID: &str = "truth_solid.json";
    pub const TRUTH_CLOUD: &str = "truth_cloud.ply";
    pub const SCENE_MESH: &str = "scene.ply";
    pub const SCENE_SPEC: &str = "scene.json";
    pub const TRAJECTORY: &str = "trajectory.json";
    pub const ROBOT_DIR: &str = "robot";
    pub const ROBOT_MANIFEST: &str = "robot.json";
    pub const ROBOT_POSE: &str = "robot_pose.json";
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Orbit around the test object (or the room center) used when `synth` gets
/// no trajectory file.
pub fn default_trajectory(spec: &SceneSpec) -> anyhow::Result<Trajectory> {
    let target = match &spec.test_object {
        Some(o) => o.pose.apply(&Point3::from(Vector3::from(o.size) / 2.0)),
        None => spec.room.center(),
    };
    Ok(Trajectory::orbit(target, 1.5, 1.7, 12, 0.0, 330.0, 5.0)?)
}

pub struct SynthArgs {
    pub scene: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs, cfg: &RunConfig) -> anyhow::Result<String> {
    let spec: SceneSpec = match &args.scene {
        Some(p) => read_json(p, "scene spec")?,
        None => SceneSpec::default(),
    };
    spec.validate().context("invalid scene spec")?;
    let traj = match &args.trajectory {
        Some(p) => read_json(p, "trajectory")?,
        None => default_trajectory(&spec)?,
    };
    let scene = build_scene(&spec, cfg.grid.leaf)?;
    let frames = render_frames(&scene.mesh, &traj, &cfg.sensor, cfg.seed)?;

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_frames(out.join(layout::FRAMES), &frames)?;
    write_grid(out.join(layout::TRUTH_GRID), &scene.truth_shell, &[])?;
    write_grid(out.join(layout::TRUTH_SOLID), &scene.truth_solid, &[])?;
    write_cloud(out.join(layout::TRUTH_CLOUD), &scene.truth_cloud)?;
    write_mesh(out.join(layout::SCENE_MESH), &scene.mesh)?;
    write_json(&out.join(layout::SCENE_SPEC), &spec)?;
    write_json(&out.join(layout::TRAJECTORY), &traj)?;
    if let Some(pose) = &spec.robot {
        RobotModel::demo_arm().save(out.join(layout::ROBOT_DIR), layout::ROBOT_MANIFEST)?;
        write_json(&out.join(layout::ROBOT_POSE), pose)?;
    }
    let pixels: usize = frames.iter().map(|f| f.valid_pixels()).sum();
    Ok(format!(
        "rendered {} frames ({pixels} valid pixels); truth shell {} cells, solid {} cells, truth cloud {} points -> {}",
        frames.len(),
        scene.truth_shell.occupied().len(),
        scene.truth_solid.occupied().len(),
        scene.truth_cloud.len(),
        out.display()
    ))
}

pub struct MapArgs {
    pub frames: PathBuf,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

pub fn map(args: &MapArgs, cfg: &RunConfig) -> anyhow::Result<String> {
    let frames = read_frames(&args.frames)?;
    let (cloud, report) = map_frames(&frames, &cfg.filters, cfg.use_icp, &cfg.icp)?;
    write_cloud(&args.out, &cloud)?;
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    let mut lines = vec![format!("fused {} frames: {} points", frames.len(), report.input)];
    lines.extend(report.stages.iter().map(|s| format!("  {:<10} {}", s.stage, s.points)));
    lines.push(format!("  {} planes snapped; wrote {}", report.planes, args.out.display()));
    Ok(lines.join("\n"))
}

/// A seed pose file: either a full transform or a position with a heading,
/// the way a seed marker is placed by hand.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SeedPoseDoc {
    Transform(RigidTransform),
    Placed { position: [f64; 3], yaw_deg: f64 },
}

impl SeedPoseDoc {
    pub fn transform(&self) -> RigidTransform {
        match self {
            SeedPoseDoc::Transform(t) => *t,
            SeedPoseDoc::Placed { position, yaw_deg } => {
                RigidTransform::from_axis_angle(Vector3::z(), yaw_deg.to_radians(), Vector3::from(*position))
            }
        }
    }
}

/// What `reference` writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub transform: RigidTransform,
    pub rms: f64,
    pub overlap_fraction: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&IcpResult> for ReferenceReport {
    fn from(r: &IcpResult) -> Self {
        ReferenceReport {
            transform: r.transform,
            rms: r.rms,
            overlap_fraction: r.overlap_fraction,
            converged: r.converged,
            iterations: r.iterations,
        }
    }
}

/// Robot-to-map transform file: a `reference` report or a bare transform.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TransformDoc {
    Report(ReferenceReport),
    Bare(RigidTransform),
}

pub fn read_transform(path: &Path) -> anyhow::Result<RigidTransform> {
    match read_json(path, "transform")? {
        TransformDoc::Report(r) if !r.converged => {
            bail!("{} holds a referencing result that did not converge", path.display())
        }
        TransformDoc::Report(r) => Ok(r.transform),
        TransformDoc::Bare(t) => Ok(t),
    }
}

pub struct ReferenceArgs {
    pub cloud: PathBuf,
    pub robot: PathBuf,
    pub seed_pose: PathBuf,
    pub out: PathBuf,
}

/// Referencing outcome; `converged == false` must make the caller stop.
pub struct ReferenceOutcome {
    pub report: ReferenceReport,
    pub message: String,
}

pub fn reference_cmd(args: &ReferenceArgs, cfg: &RunConfig) -> anyhow::Result<ReferenceOutcome> {
    let scene = read_cloud(&args.cloud)?;
    let model = RobotModel::load(&args.robot)?;
    let seed: SeedPoseDoc = read_json(&args.seed_pose, "seed pose")?;
    let (_, result) = reference(&scene, &model, &seed.transform(), &cfg.reference)?;
    let report = ReferenceReport::from(&result);
    let fitness = format!(
        "rms {:.4} m, overlap {:.3}, {} iterations",
        report.rms, report.overlap_fraction, report.iterations
    );
    let message = if report.converged {
        write_json(&args.out, &report)?;
        format!("referencing converged: {fitness}; wrote {}", args.out.display())
    } else {
        format!("referencing failed: {fitness}; move the seed pose closer to the robot base")
    };
    Ok(ReferenceOutcome { report, message })
}

pub struct GridArgs {
    pub cloud: PathBuf,
    pub transform: PathBuf,
    pub robot: PathBuf,
    pub out: PathBuf,
}

pub fn grid(args: &GridArgs, cfg: &RunConfig) -> anyhow::Result<String> {
    let map = read_cloud(&args.cloud)?;
    let robot_to_map = read_transform(&args.transform)?;
    let model = RobotModel::load(&args.robot)?;
    let grid = grid_from_map(&map, &robot_to_map, &model, &cfg.grid)?;
    write_grid(&args.out, &grid, &[])?;
    let padding: Vec<String> = grid.padding().iter().map(|l| l.len().to_string()).collect();
    Ok(format!(
        "{} occupied cells of {} m, padding [{}]; wrote {}",
        grid.occupied().len(),
        grid.leaf(),
        padding.join(", "),
        args.out.display()
    ))
}

pub fn pad_cmd(grid_path: &Path, levels: usize, out: &Path) -> anyhow::Result<String> {
    let (grid, zones) = read_grid(grid_path)?;
    let padded = pad(&grid, levels);
    write_grid(out, &padded, &zones)?;
    let sizes: Vec<String> = (1..=levels)
        .map(|l| format!("{} x {} m", padded.padding()[l - 1].len(), padded.level_size(l)))
        .collect();
    Ok(format!("padding [{}]; wrote {}", sizes.join(", "), out.display()))
}

pub fn eval_cloud(map: &Path, truth: &Path, symmetric: bool, json: Option<&Path>) -> anyhow::Result<String> {
    let (a, b) = (read_cloud(map)?, read_cloud(truth)?);
    let report = if symmetric {
        symmetric_cloud_distance(&a, &b)?
    } else {
        cloud_distance(&a, &b)?
    };
    if let Some(p) = json {
        write_json(p, &report)?;
    }
    let cols = ["map"];
    let reports = std::slice::from_ref(&report);
    Ok(format!("{}\n{}", distance_table(&cols, reports), percentile_table(&cols, reports)))
}

/// `min_x,min_y,min_z,max_x,max_y,max_z`.
pub fn parse_region(text: &str) -> anyhow::Result<AxisAlignedBox> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("region `{text}` must be six comma-separated numbers"))?;
    if v.len() != 6 {
        bail!("region `{text}` must be six comma-separated numbers, got {}", v.len());
    }
    Ok(AxisAlignedBox::new(Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]))?)
}

pub fn eval_grid(
    grid: &Path,
    truth: &Path,
    region: Option<&AxisAlignedBox>,
    json: Option<&Path>,
) -> anyhow::Result<String> {
    let (g, _) = read_grid(grid)?;
    let (t, _) = read_grid(truth)?;
    let everywhere = AxisAlignedBox::new(Point3::from(Vector3::repeat(-1e9)), Point3::from(Vector3::repeat(1e9)))?;
    let report = fp_fn_count(&g, &t, region.unwrap_or(&everywhere))?;
    if let Some(p) = json {
        write_json(p, &report)?;
    }
    Ok(cellmap_core::eval::fp_fn_table(&[report]).to_string())
}

pub fn eval_noise(frames: &Path, nominal: f64, size: usize, json: Option<&Path>) -> anyhow::Result<String> {
    let frames = read_frames(frames)?;
    let region = PixelRegion::centered(frames[0].width(), frames[0].height(), size);
    let stats = depth_noise_stats(&frames, region)?;
    if let Some(p) = json {
        write_json(p, &stats)?;
    }
    Ok(noise_table(&["center"], &[(nominal, vec![stats])]).to_string())
}

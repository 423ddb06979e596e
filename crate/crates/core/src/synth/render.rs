use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, RigidTransform, TriangleMesh, Vector3};
use crate::registration::{DepthFrame, Intrinsics, MAX_VALID_DEPTH, MIN_VALID_DEPTH};

/// Depth sensor parameters. Defaults model the long-throw stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    /// Valid depth interval `[min, max]`, meters; hits outside read 0.
    pub range_m: [f64; 2],
    pub frame_rate_hz: f64,
    /// Standard deviation of the additive depth noise, meters.
    pub noise_sigma: f64,
    /// Noise is redrawn until within this bound of the true depth.
    pub noise_truncation: f64,
    /// Per-axis standard deviation of the recorded-pose translation error.
    pub pose_sigma_translation: f64,
    /// Per-axis standard deviation of the recorded-pose rotation error, degrees.
    pub pose_sigma_rotation_deg: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            width: 160,
            height: 120,
            hfov_deg: 70.0,
            range_m: [0.5, 4.0],
            frame_rate_hz: 5.0,
            noise_sigma: 0.003,
            noise_truncation: 0.005,
            pose_sigma_translation: 0.0,
            pose_sigma_rotation_deg: 0.0,
        }
    }
}

impl SensorModel {
    /// The short-range stream's constants (0.2-1 m at 30 fps); not used by
    /// the mapping pipeline.
    pub fn short_throw() -> SensorModel {
        SensorModel {
            range_m: [0.2, 1.0],
            frame_rate_hz: 30.0,
            ..SensorModel::default()
        }
    }

    pub fn noiseless() -> SensorModel {
        SensorModel {
            noise_sigma: 0.0,
            noise_truncation: 0.0,
            ..SensorModel::default()
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.width, self.height, self.hfov_deg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::config(format!("sensor.{field}: {why}")));
        if self.width == 0 || self.height == 0 || (self.width * self.height) as u64 >= u32::MAX as u64 {
            return bad("width/height", format!("unsupported resolution {}x{}", self.width, self.height));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return bad("hfov_deg", format!("must be in (0, 180), got {}", self.hfov_deg));
        }
        let [lo, hi] = self.range_m;
        if !(lo > 0.0 && lo < hi) {
            return bad("range_m", format!("need 0 < min < max, got {:?}", self.range_m));
        }
        if lo - self.noise_truncation < MIN_VALID_DEPTH || hi + self.noise_truncation > MAX_VALID_DEPTH {
            return bad(
                "range_m",
                format!("range plus noise must stay within [{MIN_VALID_DEPTH}, {MAX_VALID_DEPTH}] m"),
            );
        }
        if !(self.frame_rate_hz > 0.0) {
            return bad("frame_rate_hz", format!("must be positive, got {}", self.frame_rate_hz));
        }
        if !(self.noise_sigma >= 0.0) || !(self.noise_truncation >= self.noise_sigma) {
            return bad(
                "noise_sigma",
                format!("need 0 <= sigma <= truncation, got {} / {}", self.noise_sigma, self.noise_truncation),
            );
        }
        if self.noise_sigma > 0.0 && self.noise_truncation <= 0.0 {
            return bad("noise_truncation", "must be positive when sigma is".into());
        }
        if !(self.pose_sigma_translation >= 0.0) || !(self.pose_sigma_rotation_deg >= 0.0) {
            return bad("pose_sigma_translation", "pose noise must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryPose {
    pub timestamp: f64,
    /// Sensor-to-world.
    pub pose: RigidTransform,
}

/// Sensor poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryDoc", into = "TrajectoryDoc")]
pub struct Trajectory {
    poses: Vec<TrajectoryPose>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    poses: Vec<TrajectoryPose>,
}

impl TryFrom<TrajectoryDoc> for Trajectory {
    type Error = Error;

    fn try_from(doc: TrajectoryDoc) -> Result<Self> {
        Trajectory::new(doc.poses)
    }
}

impl From<Trajectory> for TrajectoryDoc {
    fn from(t: Trajectory) -> Self {
        TrajectoryDoc { poses: t.poses }
    }
}

impl Trajectory {
    pub fn new(poses: Vec<TrajectoryPose>) -> Result<Self> {
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::invalid(format!(
                    "trajectory timestamps must increase strictly (pose {} at {}, pose {} at {})",
                    i,
                    w[0].timestamp,
                    i + 1,
                    w[1].timestamp
                )));
            }
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[TrajectoryPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// `count` poses on a horizontal arc of `radius` around `target` at
    /// height `eye_height`, from `start_deg` sweeping `sweep_deg`, each
    /// looking at `target`, one per `1 / rate_hz` seconds.
    pub fn orbit(
        target: Point3,
        radius: f64,
        eye_height: f64,
        count: usize,
        start_deg: f64,
        sweep_deg: f64,
        rate_hz: f64,
    ) -> Result<Trajectory> {
        if !(rate_hz > 0.0) {
            return Err(Error::invalid("orbit rate must be positive"));
        }
        let step = if count > 1 { sweep_deg / (count - 1) as f64 } else { 0.0 };
        let poses = (0..count)
            .map(|i| {
                let a = (start_deg + step * i as f64).to_radians();
                let eye = Point3::new(target.x + radius * a.cos(), target.y + radius * a.sin(), eye_height);
                Ok(TrajectoryPose {
                    timestamp: i as f64 / rate_hz,
                    pose: RigidTransform::look_at(eye, target, Vector3::z())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(poses)
    }
}

const RAY_EPS: f64 = 1e-9;

struct Tri {
    a: Vector3,
    e1: Vector3,
    e2: Vector3,
    n: Vector3,
}

fn prepare(mesh: &TriangleMesh) -> Vec<Tri> {
    (0..mesh.triangles().len())
        .filter(|&t| !mesh.is_degenerate(t))
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            let (e1, e2) = (b - a, c - a);
            Tri {
                a: a.coords,
                e1,
                e2,
                n: e1.cross(&e2),
            }
        })
        .collect()
}

/// Nearest `t > 0` with `origin + t * dir` on a triangle.
fn nearest_hit(tris: &[Tri], origin: &Vector3, dir: &Vector3) -> Option<f64> {
    let mut best: Option<f64> = None;
    for tri in tris {
        // Möller-Trumbore inside test, two-sided.
        let p = dir.cross(&tri.e2);
        let det = tri.e1.dot(&p);
        if det.abs() < 1e-300 {
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - tri.a;
        let u = s.dot(&p) * inv;
        if !(-RAY_EPS..=1.0 + RAY_EPS).contains(&u) {
            continue;
        }
        let q = s.cross(&tri.e1);
        let v = dir.dot(&q) * inv;
        if v < -RAY_EPS || u + v > 1.0 + RAY_EPS {
            continue;
        }
        // Distance from the supporting plane; exact on axis-aligned faces.
        let t = tri.n.dot(&(tri.a - origin)) / tri.n.dot(dir);
        if t > RAY_EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

/// Parameter `t` of the nearest intersection of the ray `origin + t * dir`
/// with the mesh.
pub fn cast_ray(mesh: &TriangleMesh, origin: &Point3, dir: &Vector3) -> Option<f64> {
    nearest_hit(&prepare(mesh), &origin.coords, dir)
}

fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64, bound: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    loop {
        let x: f64 = normal.sample(rng);
        if x.abs() <= bound {
            return x;
        }
    }
}

/// Random stream for pixel `pixel` of frame `frame`; the last stream of each
/// frame drives its pose error.
fn stream(seed: u64, frame: usize, pixel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((frame as u64) << 32) | pixel);
    rng
}

fn pose_error(sensor: &SensorModel, rng: &mut ChaCha8Rng) -> RigidTransform {
    let gauss = |rng: &mut ChaCha8Rng, s: f64| if s > 0.0 { Normal::new(0.0, s).expect("sigma").sample(rng) } else { 0.0 };
    let t = Vector3::new(
        gauss(rng, sensor.pose_sigma_translation),
        gauss(rng, sensor.pose_sigma_translation),
        gauss(rng, sensor.pose_sigma_translation),
    );
    let s = sensor.pose_sigma_rotation_deg.to_radians();
    let (r, p, y) = (gauss(rng, s), gauss(rng, s), gauss(rng, s));
    RigidTransform::from_euler(r, p, y, t)
}

/// Renders one depth frame per trajectory pose.
///
/// Each pixel casts a ray through its center; the nearest hit's depth along
/// the optical axis is kept if it lies in the sensor range, then perturbed by
/// truncated Gaussian noise. Every pixel draws from its own seeded stream, so
/// output does not depend on evaluation order. With pose noise, the recorded
/// pose of every frame after the first is the true pose moved by a random
/// rigid error (the first frame anchors the map).
pub fn render_frames(mesh: &TriangleMesh, traj: &Trajectory, sensor: &SensorModel, seed: u64) -> Result<Vec<DepthFrame>> {
    sensor.validate()?;
    let tris = prepare(mesh);
    let k = sensor.intrinsics();
    let (w, h) = (sensor.width, sensor.height);
    traj.poses()
        .iter()
        .enumerate()
        .map(|(f, tp)| {
            let rot = tp.pose.rotation();
            let origin = *tp.pose.translation();
            let depth: Vec<f64> = (0..w * h)
                .into_par_iter()
                .map(|i| {
                    let (u, v) = ((i % w) as f64, (i / w) as f64);
                    let dir = rot * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
                    match nearest_hit(&tris, &origin, &dir) {
                        Some(d) if d >= sensor.range_m[0] && d <= sensor.range_m[1] => {
                            let mut rng = stream(seed, f, i as u64);
                            d + truncated_normal(&mut rng, sensor.noise_sigma, sensor.noise_truncation)
                        }
                        _ => 0.0,
                    }
                })
                .collect();
            let recorded = if f > 0 && (sensor.pose_sigma_translation > 0.0 || sensor.pose_sigma_rotation_deg > 0.0) {
                pose_error(sensor, &mut stream(seed, f, u32::MAX as u64)).compose(&tp.pose)
            } else {
                tp.pose
            };
            Ok(DepthFrame::new(w, h, depth, k, recorded)?.with_timestamp(tp.timestamp))
        })
        .collect()
}

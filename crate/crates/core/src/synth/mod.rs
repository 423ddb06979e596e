//! Synthetic work cells and a simulated depth sensor, so every stage can be
//! checked against exact ground truth.

mod render;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{grid_cell, AxisAlignedBox, Point3, PointCloud, RigidTransform, TriangleMesh, Vector3};
use crate::occupancy::{OccupancyGrid, VoxelKey};
use crate::referencing::RobotModel;
use crate::registration::sample_mesh;

pub use render::{cast_ray, render_frames, SensorModel, Trajectory, TrajectoryPose};

/// A solid box spanning `[0, size]` in its own frame, placed by `pose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub name: String,
    pub size: [f64; 3],
    #[serde(default = "RigidTransform::identity")]
    pub pose: RigidTransform,
}

impl SceneObject {
    /// An axis-aligned box between two corners.
    pub fn aabb(name: &str, min: [f64; 3], max: [f64; 3]) -> SceneObject {
        SceneObject {
            name: name.to_string(),
            size: [max[0] - min[0], max[1] - min[1], max[2] - min[2]],
            pose: RigidTransform::from_translation(Vector3::from(min)),
        }
    }

    pub fn mesh(&self) -> TriangleMesh {
        TriangleMesh::cuboid(Point3::origin(), Point3::from(self.size), false).transformed(&self.pose)
    }

    fn obb(&self) -> Obb {
        Obb::new(&self.pose, self.size)
    }
}

/// Room, furniture, robot placement and the evaluation object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub room: AxisAlignedBox,
    pub furniture: Vec<SceneObject>,
    /// Robot-base pose in the world; `None` leaves the robot out.
    pub robot: Option<RigidTransform>,
    pub test_object: Option<SceneObject>,
    /// Ground-truth cloud density, points per square meter.
    pub truth_points_per_m2: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// A 4 x 4 x 3 m room with a table and a cabinet, the demo arm at the
    /// origin and a 0.2 x 0.2 x 0.3 m cuboid on the table. Horizontal faces
    /// near the cuboid sit mid-cell on the 5 cm grid.
    fn default() -> Self {
        SceneSpec {
            room: AxisAlignedBox::new(Point3::new(-2.0, -2.0, 0.0), Point3::new(2.0, 2.0, 3.0)).expect("valid room"),
            furniture: vec![
                SceneObject::aabb("table", [-0.025, 0.225, 0.0], [0.975, 1.025, 0.725]),
                SceneObject::aabb("cabinet", [-1.975, -1.2, 0.0], [-1.425, -0.2, 1.825]),
            ],
            robot: Some(RigidTransform::identity()),
            test_object: Some(SceneObject::aabb("cuboid", [0.225, 0.325, 0.725], [0.425, 0.525, 1.025])),
            truth_points_per_m2: 2_000.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Only the room.
    pub fn bare_room(room: AxisAlignedBox) -> SceneSpec {
        SceneSpec {
            room,
            furniture: vec![],
            robot: None,
            test_object: None,
            ..SceneSpec::default()
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = &SceneObject> {
        self.furniture.iter().chain(&self.test_object)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.room.volume() > 0.0) {
            return Err(Error::invalid("room must have positive extents"));
        }
        if !(self.truth_points_per_m2 > 0.0) {
            return Err(Error::invalid("truth_points_per_m2 must be positive"));
        }
        let objects: Vec<&SceneObject> = self.objects().collect();
        for o in &objects {
            if o.size.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::invalid(format!("object `{}` has non-positive size {:?}", o.name, o.size)));
            }
            if let Some(c) = o.obb().corners().iter().find(|c| !self.room.expanded(1e-9).expect("valid").contains(c)) {
                return Err(Error::invalid(format!(
                    "object `{}` leaves the room at {:?}",
                    o.name,
                    c.coords.as_slice()
                )));
            }
        }
        let robot_parts: Vec<(String, Obb)> = match &self.robot {
            Some(base) => robot_boxes(base),
            None => vec![],
        };
        let named: Vec<(String, Obb)> = objects
            .iter()
            .map(|o| (o.name.clone(), o.obb()))
            .chain(robot_parts)
            .collect();
        for (i, (na, a)) in named.iter().enumerate() {
            for (nb, b) in &named[i + 1..] {
                if a.overlaps(b) {
                    return Err(Error::invalid(format!("objects `{na}` and `{nb}` overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Bounding boxes of the demo arm's links, in world coordinates.
fn robot_boxes(base: &RigidTransform) -> Vec<(String, Obb)> {
    RobotModel::demo_arm()
        .links()
        .iter()
        .map(|link| {
            let v = link.mesh.vertices();
            let lo = v.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(&p.coords));
            let hi = v.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(&p.coords));
            let pose = base.compose(&link.pose).compose(&RigidTransform::from_translation(lo));
            (format!("robot/{}", link.name), Obb::new(&pose, (hi - lo).into()))
        })
        .collect()
}

/// Oriented box: center, unit axes, half extents.
#[derive(Debug, Clone, Copy)]
struct Obb {
    center: Point3,
    axes: [Vector3; 3],
    half: [f64; 3],
}

const SAT_TOL: f64 = 1e-9;

impl Obb {
    fn new(pose: &RigidTransform, size: [f64; 3]) -> Obb {
        let r = pose.rotation();
        Obb {
            center: pose.apply(&Point3::from(Vector3::from(size) / 2.0)),
            axes: [r.column(0).into(), r.column(1).into(), r.column(2).into()],
            half: size.map(|s| s / 2.0),
        }
    }

    fn from_aabb(b: &AxisAlignedBox) -> Obb {
        let e = b.extents();
        Obb::new(&RigidTransform::from_translation(b.min().coords), [e.x, e.y, e.z])
    }

    fn corners(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let s = [sx, sy, sz];
                    out.push(self.center + (0..3).map(|i| self.axes[i] * (s[i] * self.half[i])).sum::<Vector3>());
                }
            }
        }
        out
    }

    fn radius_along(&self, axis: &Vector3) -> f64 {
        (0..3).map(|i| self.half[i] * self.axes[i].dot(axis).abs()).sum()
    }

    /// Whether the open interiors intersect (separating-axis test).
    fn overlaps(&self, other: &Obb) -> bool {
        let mut axes: Vec<Vector3> = self.axes.iter().chain(&other.axes).copied().collect();
        for a in &self.axes {
            for b in &other.axes {
                let c = a.cross(b);
                if c.norm() > 1e-9 {
                    axes.push(c.normalize());
                }
            }
        }
        let d = other.center - self.center;
        axes.iter()
            .all(|l| d.dot(l).abs() < self.radius_along(l) + other.radius_along(l) - SAT_TOL)
    }

    /// Whether `p` lies strictly inside, at least `SAT_TOL` from the surface.
    fn strictly_contains(&self, p: &Point3) -> bool {
        let d = p - self.center;
        (0..3).all(|i| d.dot(&self.axes[i]).abs() < self.half[i] - SAT_TOL)
    }
}

/// Cells of the grid `(leaf, origin)` whose interior meets the box interior
/// (`solid`), and the subset not strictly inside the box (`shell`), i.e. the
/// cells the box surface passes through.
fn voxelize(obb: &Obb, leaf: f64, origin: &Point3) -> (Vec<VoxelKey>, Vec<VoxelKey>) {
    let corners = obb.corners();
    let lo = corners.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(&p.coords));
    let hi = corners.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(&p.coords));
    let (a, b) = (grid_cell(&lo.into(), origin, leaf), grid_cell(&hi.into(), origin, leaf));
    let (mut shell, mut solid) = (Vec::new(), Vec::new());
    for i in a[0] - 1..=b[0] {
        for j in a[1] - 1..=b[1] {
            for k in a[2] - 1..=b[2] {
                let min = origin + Vector3::new(i as f64, j as f64, k as f64) * leaf;
                let cell = AxisAlignedBox::new(min, min + Vector3::repeat(leaf)).expect("ordered");
                let cell = Obb::from_aabb(&cell);
                if !obb.overlaps(&cell) {
                    continue;
                }
                solid.push([i, j, k]);
                if !cell.corners().iter().all(|c| obb.strictly_contains(c)) {
                    shell.push([i, j, k]);
                }
            }
        }
    }
    (shell, solid)
}

/// Everything [`build_scene`] produces.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Room, furniture, test object and robot, world frame.
    pub mesh: TriangleMesh,
    /// The robot alone, world frame (empty without a robot).
    pub robot_mesh: TriangleMesh,
    /// Cells crossed by environment surfaces (robot excluded), robot frame,
    /// anchored at the robot base.
    pub truth_shell: OccupancyGrid,
    /// Cells overlapping environment solids; the room counts as its wall
    /// layer only.
    pub truth_solid: OccupancyGrid,
    /// Uniform samples of `mesh`, world frame.
    pub truth_cloud: PointCloud,
}

/// Meshes the scene, voxelizes its ground truth at `leaf` and samples a
/// ground-truth cloud.
pub fn build_scene(spec: &SceneSpec, leaf: f64) -> Result<Scene> {
    spec.validate()?;
    let mut truth_shell = OccupancyGrid::new(leaf, Point3::origin())?;
    let mut truth_solid = truth_shell.clone();
    let base = spec.robot.unwrap_or_else(RigidTransform::identity);
    let to_robot = base.inverse();

    let mut mesh = TriangleMesh::cuboid(*spec.room.min(), *spec.room.max(), true);
    let room_pose = to_robot.compose(&RigidTransform::from_translation(spec.room.min().coords));
    let e = spec.room.extents();
    let (room_shell, _) = voxelize(&Obb::new(&room_pose, [e.x, e.y, e.z]), leaf, &Point3::origin());
    truth_shell.occupied_mut().extend(room_shell.iter().copied());
    truth_solid.occupied_mut().extend(room_shell);

    for o in spec.objects() {
        mesh.append(&o.mesh());
        let local = SceneObject {
            pose: to_robot.compose(&o.pose),
            ..o.clone()
        };
        let (shell, solid) = voxelize(&local.obb(), leaf, &Point3::origin());
        truth_shell.occupied_mut().extend(shell);
        truth_solid.occupied_mut().extend(solid);
    }

    let robot_mesh = match &spec.robot {
        Some(pose) => RobotModel::demo_arm().mesh().transformed(pose),
        None => TriangleMesh::default(),
    };
    mesh.append(&robot_mesh);
    let n = (mesh.surface_area() * spec.truth_points_per_m2).round() as usize;
    let truth_cloud = sample_mesh(&mesh, n, spec.seed)?;
    Ok(Scene {
        mesh,
        robot_mesh,
        truth_shell,
        truth_solid,
        truth_cloud,
    })
}

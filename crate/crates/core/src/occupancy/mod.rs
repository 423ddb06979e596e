//! The voxel occupancy grid handed to the motion planner: building it from
//! the referenced map, surface padding with half-size voxels, user edits,
//! safety zones and the saved document format.

mod document;
mod edits;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{grid_cell, AxisAlignedBox, KdTree, Point3, PointCloud, RigidTransform, Vector3};

pub use document::{export_boxes_csv, load_grid, read_grid, save_grid, write_grid};
pub use edits::{snap_edits, Edit, EditScript, EditWarning};

/// Integer cell index `(i, j, k)`.
pub type VoxelKey = [i64; 3];

/// Occupied cells of side `leaf` anchored at `origin`, plus padding layers.
/// `padding()[l - 1]` holds level `l`, whose cells have side `leaf / 2^l` on
/// a grid sharing the same origin.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    leaf: f64,
    origin: Point3,
    version: u64,
    occupied: BTreeSet<VoxelKey>,
    padding: Vec<BTreeSet<VoxelKey>>,
}

impl OccupancyGrid {
    pub fn new(leaf: f64, origin: Point3) -> Result<Self> {
        if !(leaf > 0.0 && leaf.is_finite()) {
            return Err(Error::invalid(format!("voxel leaf must be positive, got {leaf}")));
        }
        if !crate::geom::is_finite(&origin) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(OccupancyGrid {
            leaf,
            origin,
            version: 0,
            occupied: BTreeSet::new(),
            padding: Vec::new(),
        })
    }

    pub fn with_occupied(leaf: f64, origin: Point3, keys: impl IntoIterator<Item = VoxelKey>) -> Result<Self> {
        let mut grid = OccupancyGrid::new(leaf, origin)?;
        grid.occupied.extend(keys);
        Ok(grid)
    }

    pub fn leaf(&self) -> f64 {
        self.leaf
    }

    pub fn origin(&self) -> &Point3 {
        &self.origin
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn occupied(&self) -> &BTreeSet<VoxelKey> {
        &self.occupied
    }

    pub fn padding(&self) -> &[BTreeSet<VoxelKey>] {
        &self.padding
    }

    /// Cell side at padding `level` (0 = occupied cells).
    pub fn level_size(&self, level: usize) -> f64 {
        self.leaf / (1u64 << level) as f64
    }

    pub fn key_of(&self, p: &Point3) -> VoxelKey {
        grid_cell(p, &self.origin, self.leaf)
    }

    pub fn cell_box(&self, level: usize, key: &VoxelKey) -> AxisAlignedBox {
        let s = self.level_size(level);
        let min = self.origin + Vector3::new(key[0] as f64, key[1] as f64, key[2] as f64) * s;
        AxisAlignedBox::new(min, min + Vector3::repeat(s)).expect("cell box is ordered")
    }

    pub fn cell_center(&self, level: usize, key: &VoxelKey) -> Point3 {
        self.cell_box(level, key).center()
    }

    /// Whether cell `key` of `level` lies inside the occupied cells or any
    /// padding layer up to and including `level`.
    fn covered(&self, level: usize, key: &VoxelKey) -> bool {
        let up = |shift: usize| key.map(|k| k >> shift);
        self.occupied.contains(&up(level))
            || (1..=level.min(self.padding.len())).any(|j| self.padding[j - 1].contains(&up(level - j)))
    }

    /// Whether `p` lies in the closed volume of an occupied or padded cell,
    /// with `tol` slack on cell boundaries.
    pub fn covers_point(&self, p: &Point3, tol: f64) -> bool {
        (0..=self.padding.len()).any(|level| {
            let s = self.level_size(level);
            let lo = grid_cell(&(p - Vector3::repeat(tol)), &self.origin, s);
            let hi = grid_cell(&(p + Vector3::repeat(tol)), &self.origin, s);
            let set = if level == 0 { &self.occupied } else { &self.padding[level - 1] };
            (lo[0]..=hi[0]).any(|i| (lo[1]..=hi[1]).any(|j| (lo[2]..=hi[2]).any(|k| set.contains(&[i, j, k]))))
        })
    }

    /// Every stored box as `(level, key)`, occupied cells first.
    pub fn boxes(&self) -> impl Iterator<Item = (usize, &VoxelKey)> {
        self.occupied
            .iter()
            .map(|k| (0, k))
            .chain(self.padding.iter().enumerate().flat_map(|(l, set)| set.iter().map(move |k| (l + 1, k))))
    }

    pub(crate) fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub(crate) fn occupied_mut(&mut self) -> &mut BTreeSet<VoxelKey> {
        &mut self.occupied
    }

    pub(crate) fn set_padding(&mut self, padding: Vec<BTreeSet<VoxelKey>>) {
        self.padding = padding;
    }
}

/// A named region the planner must keep out of, in robot coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZoneDoc", into = "ZoneDoc")]
pub struct SafetyZone {
    name: String,
    region: AxisAlignedBox,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneDoc {
    name: String,
    min: [f64; 3],
    max: [f64; 3],
}

impl SafetyZone {
    pub fn new(name: impl Into<String>, region: AxisAlignedBox) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::invalid("safety zone name must not be empty"));
        }
        Ok(SafetyZone { name, region })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn region(&self) -> &AxisAlignedBox {
        &self.region
    }
}

impl TryFrom<ZoneDoc> for SafetyZone {
    type Error = Error;

    fn try_from(doc: ZoneDoc) -> Result<Self> {
        SafetyZone::new(doc.name, AxisAlignedBox::new(Point3::from(doc.min), Point3::from(doc.max))?)
    }
}

impl From<SafetyZone> for ZoneDoc {
    fn from(z: SafetyZone) -> Self {
        let (min, max) = (z.region.min(), z.region.max());
        ZoneDoc {
            name: z.name,
            min: [min.x, min.y, min.z],
            max: [max.x, max.y, max.z],
        }
    }
}

/// Rejects zone lists with repeated names.
pub fn validate_zones(zones: &[SafetyZone]) -> Result<()> {
    let mut names = BTreeSet::new();
    for z in zones {
        if !names.insert(z.name()) {
            return Err(Error::invalid(format!("duplicate safety zone name `{}`", z.name())));
        }
    }
    Ok(())
}

/// Keeps the points within `d_reach` of the robot base, which sits at the
/// translation of `robot_to_map`.
pub fn reach_filter(cloud: &PointCloud, robot_to_map: &RigidTransform, d_reach: f64) -> Result<PointCloud> {
    if !(d_reach > 0.0) {
        return Err(Error::invalid(format!("reach must be positive, got {d_reach}")));
    }
    let base = Point3::from(*robot_to_map.translation());
    let r2 = d_reach * d_reach;
    Ok(cloud.filter(|_, p| (p - base).norm_squared() <= r2))
}

/// Drops every scene point within `tol` of a point of the robot model cloud
/// (both in map coordinates).
pub fn remove_robot_points(scene: &PointCloud, robot: &PointCloud, tol: f64) -> Result<PointCloud> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("robot removal tolerance must be positive, got {tol}")));
    }
    if robot.is_empty() {
        return Ok(scene.clone());
    }
    let tree = KdTree::build(robot);
    let keep: Vec<bool> = scene
        .points()
        .par_iter()
        .map(|p| tree.nearest_within(p, tol).is_none())
        .collect();
    Ok(scene.filter(|i, _| keep[i]))
}

/// Occupies every cell containing at least one point.
pub fn build_grid(cloud: &PointCloud, leaf: f64, origin: Point3) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::new(leaf, origin)?;
    let keys: Vec<VoxelKey> = cloud.iter().map(|p| grid.key_of(p)).collect();
    grid.occupied.extend(keys);
    Ok(grid)
}

const FACES: [(usize, i64); 6] = [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)];

/// Recomputes `levels` padding layers from the occupied cells.
///
/// Level `l` covers every exposed face of the level `l - 1` shell (level 0
/// being the occupied cells) with the 2x2 cells of side `leaf / 2^l` just
/// outside it. A face is exposed when the same-size cell across it is not
/// covered by occupied cells or by coarser padding. Cells produced by two
/// faces meeting at a corner are stored once.
pub fn pad(grid: &OccupancyGrid, levels: usize) -> OccupancyGrid {
    let mut out = grid.clone();
    out.padding.clear();
    for level in 1..=levels {
        let shell = if level == 1 { &out.occupied } else { &out.padding[level - 2] };
        let mut layer = BTreeSet::new();
        for key in shell {
            for (axis, dir) in FACES {
                let mut across = *key;
                across[axis] += dir;
                if out.covered(level - 1, &across) {
                    continue;
                }
                let base = key.map(|k| 2 * k);
                let outward = if dir > 0 { base[axis] + 2 } else { base[axis] - 1 };
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                for da in 0..2 {
                    for db in 0..2 {
                        let mut child = base;
                        child[axis] = outward;
                        child[a] += da;
                        child[b] += db;
                        layer.insert(child);
                    }
                }
            }
        }
        out.padding.push(layer);
    }
    out
}

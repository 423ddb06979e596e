//! Geometric primitives shared by every stage: points, rigid transforms,
//! point clouds, triangle meshes, boxes, and the kD-tree.
//!
//! Conventions: right-handed, Z-up, meters.

mod kdtree;
pub mod io;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use kdtree::KdTree;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;
/// Rotations read from documents may carry rounding from other tools; within
/// this bound they are projected back onto SO(3).
const ORTHONORMAL_REPAIR_TOL: f64 = 1e-6;

pub(crate) fn is_finite(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

/// Rotation plus translation, mapping points of one frame into another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting matrices that are not proper rotations
    /// (`RᵀR = I` and `det R = 1`, both within 1e-9).
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("transform has non-finite entries"));
        }
        let err = rotation_error(&rotation);
        if err > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal with det +1 (error {err:e})"
            )));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vector3, angle: f64, translation: Vector3) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        RigidTransform {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Yaw (about Z), then pitch (about Y), then roll (about X); angles in radians.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3) -> Self {
        let rotation = Rotation3::from_euler_angles(roll, pitch, yaw);
        RigidTransform {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Sensor pose at `eye` looking at `target`: +Z forward, +X image right,
    /// +Y image down. `up` must not be parallel to the viewing direction.
    pub fn look_at(eye: Point3, target: Point3, up: Vector3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(Error::invalid("look_at: eye and target coincide"));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-12 {
            return Err(Error::invalid("look_at: up vector parallel to view direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Ok(RigidTransform {
            rotation,
            translation: eye.coords,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians of `self⁻¹ ∘ other`.
    pub fn angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Largest absolute entry difference of the 3×4 matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation - other.rotation).abs().max();
        let t = (self.translation - other.translation).abs().max();
        r.max(t)
    }

    fn rows(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Max entry of `RᵀR − I` combined with `|det R − 1|`.
fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
    orth.max((r.determinant() - 1.0).abs())
}

/// Nearest proper rotation in the Frobenius sense.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

#[derive(Serialize, Deserialize)]
struct TransformDoc {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformDoc {
            rotation: self.rows(),
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = TransformDoc::deserialize(d)?;
        let r = doc.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        let t = Vector3::new(doc.translation[0], doc.translation[1], doc.translation[2]);
        let err = rotation_error(&m);
        let m = if err <= ORTHONORMAL_TOL {
            m
        } else if err <= ORTHONORMAL_REPAIR_TOL {
            nearest_rotation(&m)
        } else {
            return Err(D::Error::custom(format!(
                "rotation is not a proper rotation matrix (error {err:e})"
            )));
        };
        RigidTransform::from_parts(m, t).map_err(D::Error::custom)
    }
}

/// Ordered 3D points in meters, optionally tagged with the sensor-to-point
/// distance at capture time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    capture_distance: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::invalid(format!("point {i} has non-finite coordinates")));
        }
        Ok(PointCloud {
            points,
            capture_distance: None,
        })
    }

    pub fn with_capture_distance(points: Vec<Point3>, capture_distance: Vec<f64>) -> Result<Self> {
        if capture_distance.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} capture distances for {} points",
                capture_distance.len(),
                points.len()
            )));
        }
        if let Some(i) = capture_distance.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid(format!(
                "capture distance {i} is negative or non-finite"
            )));
        }
        let mut cloud = Self::from_points(points)?;
        cloud.capture_distance = Some(capture_distance);
        Ok(cloud)
    }

    /// Caller guarantees finiteness and matching lengths.
    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3>,
        capture_distance: Option<Vec<f64>>,
    ) -> Self {
        debug_assert!(points.iter().all(is_finite));
        debug_assert!(capture_distance
            .as_ref()
            .is_none_or(|d| d.len() == points.len()));
        PointCloud {
            points,
            capture_distance,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn capture_distance(&self) -> Option<&[f64]> {
        self.capture_distance.as_deref()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Sub-cloud with the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let capture_distance = self
            .capture_distance
            .as_ref()
            .map(|d| indices.iter().map(|&i| d[i]).collect());
        PointCloud {
            points,
            capture_distance,
        }
    }

    /// Keeps the points for which `keep(index, point)` holds, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3) -> bool) -> PointCloud {
        let indices: Vec<usize> = (0..self.len())
            .filter(|&i| keep(i, &self.points[i]))
            .collect();
        self.select(&indices)
    }

    /// Appends `other`. Capture distances survive only if both clouds carry
    /// them (an empty cloud counts as carrying them).
    pub fn extend(&mut self, other: &PointCloud) {
        let cd = match (self.capture_distance.take(), other.capture_distance.as_ref()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if self.points.is_empty() => Some(b.clone()),
            (Some(a), None) if other.points.is_empty() => Some(a),
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
        self.capture_distance = cd;
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            capture_distance: self.capture_distance.clone(),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    pub fn bounds(&self) -> Option<AxisAlignedBox> {
        let first = self.points.first()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some(AxisAlignedBox { min: lo, max: hi })
    }
}

/// Applies `t` to every point; capture distances are carried over unchanged.
pub fn transform_apply(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.transformed(t)
}

/// Triangles with an area at or below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-14;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|p| !is_finite(p)) {
            return Err(Error::invalid(format!("vertex {i} has non-finite coordinates")));
        }
        let n = vertices.len();
        if let Some((t, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&i| i >= n))
        {
            return Err(Error::invalid(format!(
                "triangle {t} references vertex {:?} but mesh has {n} vertices",
                tri
            )));
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    /// Closed axis-aligned box as 12 triangles. Normals face outward, or
    /// inward when `inward` is set (rooms are seen from inside).
    pub fn cuboid(min: Point3, max: Point3, inward: bool) -> TriangleMesh {
        let v = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
        let vertices = vec![
            v(min.x, min.y, min.z),
            v(max.x, min.y, min.z),
            v(max.x, max.y, min.z),
            v(min.x, max.y, min.z),
            v(min.x, min.y, max.z),
            v(max.x, min.y, max.z),
            v(max.x, max.y, max.z),
            v(min.x, max.y, max.z),
        ];
        let mut triangles = vec![
            [0, 2, 1],
            [0, 3, 2], // bottom
            [4, 5, 6],
            [4, 6, 7], // top
            [0, 1, 5],
            [0, 5, 4], // -y
            [2, 3, 7],
            [2, 7, 6], // +y
            [0, 4, 7],
            [0, 7, 3], // -x
            [1, 2, 6],
            [1, 6, 5], // +x
        ];
        if inward {
            for t in &mut triangles {
                t.swap(1, 2);
            }
        }
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn is_degenerate(&self, t: usize) -> bool {
        self.triangle_area(t) <= DEGENERATE_AREA
    }

    pub fn degenerate_count(&self) -> usize {
        (0..self.triangles.len())
            .filter(|&t| self.is_degenerate(t))
            .count()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| t.apply(p)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn append(&mut self, other: &TriangleMesh) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]),
        );
    }
}

/// Euclidean distance from `p` to the closed triangle `abc`.
pub fn point_triangle_distance(p: &Point3, [a, b, c]: &[Point3; 3]) -> f64 {
    // Region classification on the triangle's Voronoi regions.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// Axis-aligned box with `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAlignedBox {
    min: Point3,
    max: Point3,
}

impl AxisAlignedBox {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if !is_finite(&min) || !is_finite(&max) {
            return Err(Error::invalid("box corners must be finite"));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(Error::invalid(format!(
                "box min {:?} exceeds max {:?}",
                min.coords.as_slice(),
                max.coords.as_slice()
            )));
        }
        Ok(AxisAlignedBox { min, max })
    }

    pub fn min(&self) -> &Point3 {
        &self.min
    }

    pub fn max(&self) -> &Point3 {
        &self.max
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extents(&self) -> Vector3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    /// Closed containment.
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn expanded(&self, margin: f64) -> Result<AxisAlignedBox> {
        let m = Vector3::repeat(margin);
        AxisAlignedBox::new(self.min - m, self.max + m)
    }

    /// Whether the open interiors overlap (touching boxes do not).
    pub fn overlaps_interior(&self, other: &AxisAlignedBox) -> bool {
        (0..3).all(|i| self.min[i] < other.max[i] && other.min[i] < self.max[i])
    }
}

#[derive(Serialize, Deserialize)]
struct BoxDoc {
    min: [f64; 3],
    max: [f64; 3],
}

impl Serialize for AxisAlignedBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BoxDoc {
            min: [self.min.x, self.min.y, self.min.z],
            max: [self.max.x, self.max.y, self.max.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AxisAlignedBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = BoxDoc::deserialize(d)?;
        AxisAlignedBox::new(Point3::from(doc.min), Point3::from(doc.max)).map_err(D::Error::custom)
    }
}

/// Integer cell of a regular grid with cell size `size` anchored at `origin`:
/// `floor((p - origin) / size)` per axis.
///
/// Coordinates within 1e-9 cell of a boundary are treated as lying on it, and
/// a boundary belongs to the cell whose minimum corner it is. This keeps
/// points such as `0.15 / 0.05 = 2.9999999999999996` in cell 3.
pub fn grid_cell(p: &Point3, origin: &Point3, size: f64) -> [i64; 3] {
    let mut key = [0i64; 3];
    for (axis, k) in key.iter_mut().enumerate() {
        let q = (p[axis] - origin[axis]) / size;
        let r = q.round();
        *k = if (q - r).abs() <= 1e-9 { r as i64 } else { q.floor() as i64 };
    }
    key
}

/// Re-labels coordinate axes on import, e.g. `x,-z,y` turns a Y-up map into
/// the Z-up convention. Entry `i` names the source axis (with sign) that
/// becomes output axis `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisMap {
    source: [(usize, bool); 3],
}

impl AxisMap {
    pub const IDENTITY: AxisMap = AxisMap {
        source: [(0, false), (1, false), (2, false)],
    };

    pub fn apply(&self, p: &Point3) -> Point3 {
        let pick = |(axis, neg): (usize, bool)| if neg { -p[axis] } else { p[axis] };
        Point3::new(pick(self.source[0]), pick(self.source[1]), pick(self.source[2]))
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::from_parts_unchecked(
            cloud.points().iter().map(|p| self.apply(p)).collect(),
            cloud.capture_distance().map(<[f64]>::to_vec),
        )
    }

    /// Whether the permutation preserves handedness.
    pub fn is_proper(&self) -> bool {
        let mut m = Matrix3::zeros();
        for (row, &(axis, neg)) in self.source.iter().enumerate() {
            m[(row, axis)] = if neg { -1.0 } else { 1.0 };
        }
        m.determinant() > 0.0
    }
}

impl FromStr for AxisMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!("axis map `{s}` needs three entries")));
        }
        let mut source = [(0, false); 3];
        let mut seen = [false; 3];
        for (slot, part) in source.iter_mut().zip(&parts) {
            let (neg, name) = match part.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, part.strip_prefix('+').unwrap_or(part)),
            };
            let axis = match name {
                "x" | "X" => 0,
                "y" | "Y" => 1,
                "z" | "Z" => 2,
                _ => return Err(Error::invalid(format!("unknown axis `{part}` in `{s}`"))),
            };
            if std::mem::replace(&mut seen[axis], true) {
                return Err(Error::invalid(format!("axis repeated in `{s}`")));
            }
            *slot = (axis, neg);
        }
        Ok(AxisMap { source })
    }
}

impl fmt::Display for AxisMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["x", "y", "z"];
        let parts: Vec<String> = self
            .source
            .iter()
            .map(|&(a, neg)| format!("{}{}", if neg { "-" } else { "" }, names[a]))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_transform() -> RigidTransform {
        RigidTransform::from_euler(0.3, -0.2, 1.1, Vector3::new(0.5, -1.0, 2.0))
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let t = sample_transform();
        let id = t.compose(&t.inverse());
        assert!(id.max_abs_diff(&RigidTransform::identity()) < 1e-9);
        let id = t.inverse().compose(&t);
        assert!(id.max_abs_diff(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::from_parts(m, Vector3::zeros()).is_err());
        let m = Matrix3::identity() * 1.01;
        assert!(RigidTransform::from_parts(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn transform_json_round_trip_is_exact() {
        let t = sample_transform();
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn slightly_off_rotation_is_repaired() {
        let s = r#"{"rotation":[[0.7071068,-0.7071068,0],[0.7071068,0.7071068,0],[0,0,1]],"translation":[0,0,0]}"#;
        let t: RigidTransform = serde_json::from_str(s).unwrap();
        assert!(rotation_error(t.rotation()) < 1e-12);
        let bad = r#"{"rotation":[[1,0,0],[0,1,0],[0,0,2]],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<RigidTransform>(bad).is_err());
    }

    #[test]
    fn look_at_axes() {
        let t = RigidTransform::look_at(
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Vector3::z(),
        )
        .unwrap();
        // Optical axis maps to +X, image right to -Y, image down to -Z.
        assert!((t.apply_vector(&Vector3::z()) - Vector3::x()).norm() < 1e-12);
        assert!((t.apply_vector(&Vector3::x()) + Vector3::y()).norm() < 1e-12);
        assert!((t.apply_vector(&Vector3::y()) + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn identity_and_round_trip_on_clouds() {
        let cloud = PointCloud::with_capture_distance(
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-0.5, 0.25, 9.0)],
            vec![1.5, 2.5],
        )
        .unwrap();
        assert_eq!(transform_apply(&cloud, &RigidTransform::identity()), cloud);
        let t = sample_transform();
        let back = transform_apply(&transform_apply(&cloud, &t), &t.inverse());
        for (a, b) in back.iter().zip(cloud.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert_eq!(back.capture_distance(), cloud.capture_distance());
    }

    #[test]
    fn cloud_rejects_bad_input() {
        assert!(PointCloud::from_points(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::with_capture_distance(vec![Point3::origin()], vec![]).is_err());
        assert!(PointCloud::with_capture_distance(vec![Point3::origin()], vec![-1.0]).is_err());
    }

    #[test]
    fn mesh_validation_and_degeneracy() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        let m = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(m.is_degenerate(0));
        assert_eq!(m.degenerate_count(), 1);
        let cube = TriangleMesh::cuboid(Point3::origin(), Point3::new(1.0, 2.0, 3.0), false);
        assert_eq!(cube.triangles().len(), 12);
        assert!((cube.surface_area() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn cuboid_normals_face_outward() {
        let cube = TriangleMesh::cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0), false);
        let center = Point3::new(0.5, 0.5, 0.5);
        for t in 0..12 {
            let [a, b, c] = cube.triangle(t);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a - center)) > 0.0, "triangle {t} faces inward");
        }
    }

    #[test]
    fn point_triangle_distance_regions() {
        let tri = [Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let d = |x, y, z| point_triangle_distance(&Point3::new(x, y, z), &tri);
        assert!((d(0.2, 0.2, 0.5) - 0.5).abs() < 1e-12);
        assert!((d(-1.0, 0.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((d(0.5, -2.0, 0.0) - 2.0).abs() < 1e-12);
        assert!((d(1.0, 1.0, 0.0) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((d(2.0, 0.0, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_cell_boundaries() {
        let o = Point3::origin();
        assert_eq!(grid_cell(&Point3::new(0.15, 0.0, -0.01), &o, 0.05), [3, 0, -1]);
        assert_eq!(grid_cell(&Point3::new(0.149, 0.0499, 0.05), &o, 0.05), [2, 0, 1]);
        assert_eq!(grid_cell(&Point3::new(-0.05, 0.0, 0.0), &o, 0.05), [-1, 0, 0]);
    }

    #[test]
    fn axis_map_parsing() {
        let m: AxisMap = "x,-z,y".parse().unwrap();
        assert_eq!(m.apply(&Point3::new(1.0, 2.0, 3.0)), Point3::new(1.0, -3.0, 2.0));
        assert!(m.is_proper());
        assert_eq!(m.to_string(), "x,-z,y");
        assert!(!"x,z,y".parse::<AxisMap>().unwrap().is_proper());
        assert!("x,x,y".parse::<AxisMap>().is_err());
        assert!("x,y".parse::<AxisMap>().is_err());
    }

    #[test]
    fn box_checks() {
        assert!(AxisAlignedBox::new(Point3::new(1.0, 0.0, 0.0), Point3::origin()).is_err());
        let b = AxisAlignedBox::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(b.contains(&Point3::new(1.0, 0.5, 0.0)));
        let touching = AxisAlignedBox::new(Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 1.0, 1.0)).unwrap();
        assert!(!b.overlaps_interior(&touching));
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn transforms_preserve_distances(
            a in arb_point(), b in arb_point(),
            roll in -3.0..3.0f64, pitch in -1.5..1.5f64, yaw in -3.0..3.0f64,
            t in arb_point(),
        ) {
            let tf = RigidTransform::from_euler(roll, pitch, yaw, t.coords);
            let d0 = (a - b).norm();
            let d1 = (tf.apply(&a) - tf.apply(&b)).norm();
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn composition_law(
            p in arb_point(),
            r1 in -3.0..3.0f64, r2 in -3.0..3.0f64,
            t1 in arb_point(), t2 in arb_point(),
        ) {
            let a = RigidTransform::from_euler(r1, 0.2, -r2, t1.coords);
            let b = RigidTransform::from_euler(-r2, r1 / 3.0, 0.7, t2.coords);
            let sequential = b.apply(&a.apply(&p));
            let composed = b.compose(&a).apply(&p);
            prop_assert!((sequential - composed).norm() < 1e-9);
        }
    }
}

//! Turning sensor data into a map: depth-frame unprojection, frame fusion with
//! optional ICP refinement, and the mesh-sampling alternative.

mod frames_io;
mod icp;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::cutoff_filter;
use crate::geom::{KdTree, Point3, PointCloud, RigidTransform};

pub use frames_io::{read_frames, write_frames, FrameIndex, FrameRecord, INDEX_FILE};
pub use icp::{icp, solve_rigid, IcpParams, IcpResult};
pub use sampling::sample_mesh;

/// Valid depth readings lie in this range; 0 marks an invalid pixel.
pub const MIN_VALID_DEPTH: f64 = 0.1;
pub const MAX_VALID_DEPTH: f64 = 10.0;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Centered principal point and square pixels for a horizontal field of view.
    pub fn from_fov(width: usize, height: usize, horizontal_fov_deg: f64) -> Intrinsics {
        let f = (width as f64 / 2.0) / (horizontal_fov_deg.to_radians() / 2.0).tan();
        Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid(format!("bad intrinsics {self:?}")));
        }
        Ok(())
    }

    /// Sensor-frame point for pixel `(u, v)` at depth `d` (distance along the optical axis).
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> Point3 {
        Point3::new((u - self.cx) / self.fx * d, (v - self.cy) / self.fy * d, d)
    }

    /// Pixel coordinates and depth of a sensor-frame point.
    pub fn project(&self, p: &Point3) -> (f64, f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z)
    }
}

/// One depth capture. Depth is per pixel, row-major, in meters along the
/// optical axis; `pose` maps sensor coordinates (X right, Y down, Z forward)
/// to world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    intrinsics: Intrinsics,
    pose: RigidTransform,
    timestamp: f64,
}

impl DepthFrame {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        intrinsics: Intrinsics,
        pose: RigidTransform,
    ) -> Result<Self> {
        intrinsics.validate()?;
        if depth.len() != width * height {
            return Err(Error::invalid(format!(
                "depth raster has {} values, expected {width}x{height}",
                depth.len()
            )));
        }
        if let Some(i) = depth
            .iter()
            .position(|&d| !(d == 0.0 || (MIN_VALID_DEPTH..=MAX_VALID_DEPTH).contains(&d)))
        {
            return Err(Error::invalid(format!(
                "pixel {i} has depth {} outside {{0}} ∪ [{MIN_VALID_DEPTH}, {MAX_VALID_DEPTH}]",
                depth[i]
            )));
        }
        Ok(DepthFrame {
            width,
            height,
            depth,
            intrinsics,
            pose,
            timestamp: 0.0,
        })
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn valid_pixels(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }
}

/// Valid pixels as sensor-frame points with their capture distance.
fn unproject_sensor(frame: &DepthFrame) -> PointCloud {
    let mut points = Vec::with_capacity(frame.valid_pixels());
    let mut dist = Vec::with_capacity(points.capacity());
    for v in 0..frame.height {
        for u in 0..frame.width {
            let d = frame.depth_at(u, v);
            if d > 0.0 {
                let p = frame.intrinsics.unproject(u as f64, v as f64, d);
                dist.push(p.coords.norm());
                points.push(p);
            }
        }
    }
    PointCloud::from_parts_unchecked(points, Some(dist))
}

/// World-frame points of every valid pixel, tagged with the sensor-to-point
/// distance.
pub fn unproject(frame: &DepthFrame) -> PointCloud {
    unproject_sensor(frame).transformed(&frame.pose)
}

/// Unprojects, cutoff-filters, and concatenates the frames in order. With
/// `use_icp`, every frame after the first is aligned to the map accumulated
/// so far, starting from its recorded pose; if that ICP run does not
/// converge the recorded pose is kept.
pub fn fuse_frames(
    frames: &[DepthFrame],
    use_icp: bool,
    params: &IcpParams,
    cutoff: (f64, f64),
) -> Result<PointCloud> {
    if frames.is_empty() {
        return Err(Error::invalid("fuse_frames needs at least one frame"));
    }
    let mut map = PointCloud::with_capture_distance(Vec::new(), Vec::new())?;
    for (n, frame) in frames.iter().enumerate() {
        let local = cutoff_filter(&unproject_sensor(frame), cutoff.0, cutoff.1)?;
        let mut pose = frame.pose;
        if use_icp && !map.is_empty() && !local.is_empty() {
            let tree = KdTree::build(&map);
            let result = icp(&local, &tree, &pose, params)?;
            if result.converged {
                pose = result.transform;
            } else {
                log::warn!(
                    "frame {n}: ICP did not converge (overlap {:.3}), keeping recorded pose",
                    result.overlap_fraction
                );
            }
        }
        map.extend(&local.transformed(&pose));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;

    fn frame(width: usize, height: usize, depth: Vec<f64>, pose: RigidTransform) -> DepthFrame {
        DepthFrame::new(width, height, depth, Intrinsics::from_fov(width, height, 60.0), pose).unwrap()
    }

    #[test]
    fn principal_ray() {
        let mut depth = vec![0.0; 9];
        depth[4] = 2.0;
        let f = frame(3, 3, depth.clone(), RigidTransform::identity());
        let c = unproject(&f);
        assert_eq!(c.points(), &[Point3::new(0.0, 0.0, 2.0)]);
        assert_eq!(c.capture_distance().unwrap(), &[2.0]);
        let moved = frame(3, 3, depth, RigidTransform::from_translation(Vector3::x()));
        let c = unproject(&moved);
        assert_eq!(c.points(), &[Point3::new(1.0, 0.0, 2.0)]);
        assert_eq!(c.capture_distance().unwrap(), &[2.0]);
    }

    #[test]
    fn all_invalid_frame_is_empty() {
        let f = frame(4, 2, vec![0.0; 8], RigidTransform::identity());
        assert!(unproject(&f).is_empty());
    }

    #[test]
    fn frame_validation() {
        let i = Intrinsics::from_fov(2, 2, 60.0);
        let id = RigidTransform::identity();
        assert!(DepthFrame::new(2, 2, vec![1.0; 3], i, id).is_err());
        assert!(DepthFrame::new(2, 2, vec![0.05, 1.0, 1.0, 1.0], i, id).is_err());
        assert!(DepthFrame::new(2, 2, vec![11.0, 1.0, 1.0, 1.0], i, id).is_err());
        let bad = Intrinsics { fx: 0.0, ..i };
        assert!(DepthFrame::new(2, 2, vec![1.0; 4], bad, id).is_err());
    }

    #[test]
    fn reprojection_round_trip() {
        let (w, h) = (32, 24);
        let depth: Vec<f64> = (0..w * h).map(|i| 0.5 + (i % 97) as f64 * 0.031).collect();
        let pose = RigidTransform::from_euler(0.1, 0.2, -0.4, Vector3::new(0.3, 1.0, 1.5));
        let f = frame(w, h, depth.clone(), pose);
        let cloud = unproject(&f);
        let inv = pose.inverse();
        for (n, p) in cloud.iter().enumerate() {
            let s = inv.apply(p);
            let (u, v, d) = f.intrinsics().project(&s);
            assert!((u - (n % w) as f64).abs() < 1e-9);
            assert!((v - (n / w) as f64).abs() < 1e-9);
            assert!((d - depth[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_frame_fusion_is_cutoff_unprojection() {
        let depth: Vec<f64> = (0..16).map(|i| 0.5 + i as f64 * 0.25).collect();
        let f = frame(4, 4, depth, RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0)));
        let fused = fuse_frames(std::slice::from_ref(&f), true, &IcpParams::default(), (1.0, 3.3)).unwrap();
        let expected = crate::filters::cutoff_filter(&unproject(&f), 1.0, 3.3).unwrap();
        assert_eq!(fused, expected);
        assert!(fuse_frames(&[], false, &IcpParams::default(), (1.0, 3.3)).is_err());
    }

    #[test]
    fn fused_size_is_sum_of_kept_points() {
        let frames: Vec<DepthFrame> = (0..3)
            .map(|k| {
                let depth = (0..16).map(|i| 0.6 + ((i + k) % 7) as f64 * 0.5).collect();
                frame(4, 4, depth, RigidTransform::from_translation(Vector3::new(k as f64, 0.0, 0.0)))
            })
            .collect();
        let fused = fuse_frames(&frames, false, &IcpParams::default(), (1.0, 3.3)).unwrap();
        let expected: usize = frames
            .iter()
            .map(|f| crate::filters::cutoff_filter(&unproject(f), 1.0, 3.3).unwrap().len())
            .sum();
        assert_eq!(fused.len(), expected);
    }
}

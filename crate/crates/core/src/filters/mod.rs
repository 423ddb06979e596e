//! Point cloud cleaning: capture-distance cutoffs, voxel-grid downsampling,
//! radius outlier removal, moving-least-squares smoothing, and RANSAC plane
//! detection with projection. [`run_pipeline`] chains them in that order.

mod mls;
mod pipeline;
mod ransac;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{grid_cell, KdTree, Point3, PointCloud, Vector3};

pub use mls::mls_smooth;
pub use pipeline::{run_pipeline, PipelineReport, StageCount};
pub use ransac::{ransac_plane_snap, PlaneModel};

/// Parameters of the cleaning pipeline. Every field has a default, so a JSON
/// document only needs to name what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Points captured closer than this are dropped (the operator's hands).
    pub d_cutoff_min: f64,
    /// Points captured farther than this are dropped (low-quality returns).
    pub d_cutoff_max: f64,
    pub voxel_leaf: f64,
    pub outlier_radius: f64,
    pub outlier_min_neighbours: usize,
    pub mls_radius: f64,
    pub mls_order: usize,
    pub ransac_dist: f64,
    pub ransac_min_inliers: usize,
    pub ransac_max_planes: usize,
    pub ransac_iterations: usize,
    pub rng_seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            d_cutoff_min: 1.0,
            d_cutoff_max: 3.3,
            voxel_leaf: 0.01,
            outlier_radius: 0.05,
            outlier_min_neighbours: 9,
            mls_radius: 0.1,
            mls_order: 2,
            ransac_dist: 0.02,
            ransac_min_inliers: 500,
            ransac_max_planes: 8,
            ransac_iterations: 1000,
            rng_seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("voxel_leaf", self.voxel_leaf),
            ("outlier_radius", self.outlier_radius),
            ("mls_radius", self.mls_radius),
            ("ransac_dist", self.ransac_dist),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.d_cutoff_min >= 0.0 && self.d_cutoff_min < self.d_cutoff_max) {
            return Err(Error::config(format!(
                "d_cutoff_min/d_cutoff_max must satisfy 0 <= min < max, got {} / {}",
                self.d_cutoff_min, self.d_cutoff_max
            )));
        }
        if self.outlier_min_neighbours < 1 {
            return Err(Error::config("outlier_min_neighbours must be at least 1"));
        }
        if !(1..=2).contains(&self.mls_order) {
            return Err(Error::config(format!("mls_order must be 1 or 2, got {}", self.mls_order)));
        }
        if self.ransac_iterations == 0 {
            return Err(Error::config("ransac_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Keeps points whose capture distance lies in `[d_min, d_max]`, in order.
pub fn cutoff_filter(cloud: &PointCloud, d_min: f64, d_max: f64) -> Result<PointCloud> {
    if d_min.is_nan() || d_max.is_nan() || d_min > d_max {
        return Err(Error::invalid(format!("bad cutoff bounds [{d_min}, {d_max}]")));
    }
    let dist = cloud.capture_distance().ok_or_else(|| {
        Error::config("cutoff filter needs per-point capture distances, cloud has none")
    })?;
    Ok(cloud.filter(|i, _| dist[i] >= d_min && dist[i] <= d_max))
}

/// One centroid per occupied cell of a grid with side `leaf` anchored at the
/// origin. Output is sorted by cell key; capture distances are averaged.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    voxel_downsample_anchored(cloud, leaf, &Point3::origin())
}

/// [`voxel_downsample`] with the grid anchored at `anchor`.
pub fn voxel_downsample_anchored(cloud: &PointCloud, leaf: f64, anchor: &Point3) -> Result<PointCloud> {
    if !(leaf > 0.0 && leaf.is_finite()) {
        return Err(Error::invalid(format!("voxel leaf must be positive, got {leaf}")));
    }
    struct Acc {
        sum: Vector3,
        dist: f64,
        count: usize,
    }
    let mut cells: BTreeMap<[i64; 3], Acc> = BTreeMap::new();
    let dist = cloud.capture_distance();
    for (i, p) in cloud.iter().enumerate() {
        let acc = cells.entry(grid_cell(p, anchor, leaf)).or_insert(Acc {
            sum: Vector3::zeros(),
            dist: 0.0,
            count: 0,
        });
        acc.sum += p.coords;
        acc.count += 1;
        if let Some(d) = dist {
            acc.dist += d[i];
        }
    }
    let points = cells
        .values()
        .map(|a| Point3::from(a.sum / a.count as f64))
        .collect();
    let dist = dist.map(|_| cells.values().map(|a| a.dist / a.count as f64).collect());
    Ok(PointCloud::from_parts_unchecked(points, dist))
}

/// Drops every point with fewer than `min_neighbours` other points within
/// distance `radius`.
pub fn radius_outlier_removal(cloud: &PointCloud, radius: f64, min_neighbours: usize) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("outlier radius must be positive, got {radius}")));
    }
    let tree = KdTree::build(cloud);
    let keep: Vec<bool> = cloud
        .points()
        .par_iter()
        .map(|p| {
            // The query point itself is always in range.
            let n = tree.radius(p, radius).map(|v| v.len()).unwrap_or(0);
            n.saturating_sub(1) >= min_neighbours
        })
        .collect();
    Ok(cloud.filter(|i, _| keep[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn with_dist(d: &[f64]) -> PointCloud {
        let pts = d.iter().map(|&z| Point3::new(0.0, 0.0, z)).collect();
        PointCloud::with_capture_distance(pts, d.to_vec()).unwrap()
    }

    #[test]
    fn cutoff_bounds_inclusive() {
        let c = with_dist(&[0.5, 1.0, 2.0, 3.3, 3.31]);
        let out = cutoff_filter(&c, 1.0, 3.3).unwrap();
        assert_eq!(out.capture_distance().unwrap(), &[1.0, 2.0, 3.3]);
        let all = cutoff_filter(&c, 0.0, f64::INFINITY).unwrap();
        assert_eq!(all, c);
    }

    #[test]
    fn cutoff_requires_distances() {
        let c = PointCloud::from_points(vec![Point3::origin()]).unwrap();
        assert!(matches!(cutoff_filter(&c, 1.0, 2.0), Err(Error::Config(_))));
    }

    #[test]
    fn downsample_single_cell_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..100)
            .map(|_| Point3::new(rng.random_range(0.0..0.05), rng.random_range(0.0..0.05), rng.random_range(0.0..0.05)))
            .collect();
        let centroid = PointCloud::from_points(pts.clone()).unwrap().centroid().unwrap();
        let out = voxel_downsample(&PointCloud::from_points(pts).unwrap(), 0.05).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points()[0] - centroid).norm() < 1e-12);
    }

    #[test]
    fn downsample_distinct_cells() {
        let c = PointCloud::from_points(vec![Point3::new(0.01, 0.0, 0.0), Point3::new(0.09, 0.0, 0.0)]).unwrap();
        assert_eq!(voxel_downsample(&c, 0.05).unwrap().len(), 2);
        assert!(voxel_downsample(&c, 0.0).is_err());
        assert!(voxel_downsample(&c, -1.0).is_err());
    }

    #[test]
    fn downsample_matches_hash_map_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point3> = (0..5000)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..0.3)))
            .collect();
        let leaf = 0.1;
        let out = voxel_downsample(&PointCloud::from_points(pts.clone()).unwrap(), leaf).unwrap();
        // Oracle: plain floor keys, grouped in a hash map.
        let mut groups: HashMap<[i64; 3], Vec<Point3>> = HashMap::new();
        for p in &pts {
            let k = [(p.x / leaf).floor() as i64, (p.y / leaf).floor() as i64, (p.z / leaf).floor() as i64];
            groups.entry(k).or_default().push(*p);
        }
        assert_eq!(out.len(), groups.len());
        let mut seen = std::collections::HashSet::new();
        for q in out.iter() {
            let k = grid_cell(q, &Point3::origin(), leaf);
            assert!(seen.insert(k), "duplicate output cell {k:?}");
            let members = &groups[&k];
            let avg = members.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / members.len() as f64;
            assert!((q.coords - avg).norm() < 1e-12);
        }
    }

    #[test]
    fn isolated_point_removed() {
        let c = PointCloud::from_points(vec![Point3::origin()]).unwrap();
        assert!(radius_outlier_removal(&c, 0.05, 9).unwrap().is_empty());
    }

    #[test]
    fn grid_interior_points_survive_outlier_filter() {
        // 1 cm lattice, 11 x 11 x 11.
        let n = 11;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(Point3::new(i as f64 * 0.01, j as f64 * 0.01, k as f64 * 0.01));
                }
            }
        }
        let cloud = PointCloud::from_points(pts.clone()).unwrap();
        let out = radius_outlier_removal(&cloud, 0.05, 9).unwrap();
        // Oracle: count lattice neighbours by direct enumeration of offsets.
        let expected: Vec<Point3> = (0..pts.len())
            .filter(|&a| {
                let others = (0..pts.len())
                    .filter(|&b| b != a && (pts[a] - pts[b]).norm_squared() <= 0.05 * 0.05)
                    .count();
                others >= 9
            })
            .map(|a| pts[a])
            .collect();
        assert_eq!(out.points(), expected.as_slice());
        // A corner point of the lattice still has far more than 9 neighbours at 5 cm.
        assert_eq!(out.len(), pts.len());
    }

    #[test]
    fn default_config_matches_documented_parameters() {
        let c = FilterConfig::default();
        assert_eq!((c.d_cutoff_min, c.d_cutoff_max), (1.0, 3.3));
        assert_eq!((c.outlier_radius, c.outlier_min_neighbours), (0.05, 9));
        c.validate().unwrap();
        let bad = FilterConfig { d_cutoff_min: 3.5, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = FilterConfig { mls_order: 3, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_overrides_fields() {
        let c: FilterConfig = serde_json::from_str(r#"{"voxel_leaf": 0.02, "rng_seed": 9}"#).unwrap();
        assert_eq!(c.voxel_leaf, 0.02);
        assert_eq!(c.rng_seed, 9);
        assert_eq!(c.d_cutoff_max, 3.3);
        assert!(serde_json::from_str::<FilterConfig>(r#"{"voxel_size": 1}"#).is_err());
    }
}

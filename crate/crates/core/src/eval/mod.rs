//! Map quality metrics: cloud-to-cloud distances with percentiles, voxel
//! false-positive/false-negative counts, and depth-noise statistics, plus
//! text tables laid out like the published evaluation.

mod tables;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{point_triangle_distance, AxisAlignedBox, KdTree, PointCloud, TriangleMesh};
use crate::occupancy::OccupancyGrid;
use crate::registration::DepthFrame;

pub use tables::{distance_table, fp_fn_table, noise_table, percentile_table, repetition_table, TextTable};

/// Percentiles reported by [`cloud_distance`].
pub const REPORT_PERCENTILES: [u32; 5] = [10, 25, 50, 75, 90];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub mean: f64,
    pub hausdorff: f64,
    /// Keyed by percentile.
    pub percentiles: BTreeMap<u32, f64>,
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 * n)` (at least 1)
/// of the ascending values. `p = 100` is the maximum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::invalid("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile must be in [0, 100], got {p}")));
    }
    let rank = ((p / 100.0 * sorted.len() as f64).ceil() as usize).max(1);
    Ok(sorted[rank - 1])
}

/// For each point of `a`, the distance to its nearest neighbour in `b`.
pub fn directed_distances(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("cloud distance needs two non-empty clouds"));
    }
    let tree = KdTree::build(b);
    Ok(a.points()
        .par_iter()
        .map(|p| tree.nearest(p).expect("non-empty tree").1)
        .collect())
}

fn summarize(distances: Vec<f64>) -> DistanceReport {
    // Summed in index order so the mean does not depend on thread count.
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    let mut sorted = distances;
    sorted.sort_by(f64::total_cmp);
    let percentiles = REPORT_PERCENTILES
        .iter()
        .map(|&p| (p, percentile_sorted(&sorted, p as f64).expect("non-empty")))
        .collect();
    DistanceReport {
        mean,
        hausdorff: *sorted.last().expect("non-empty"),
        percentiles,
    }
}

/// Directed comparison of `a` against `b`: mean, maximum (directed
/// Hausdorff) and percentiles of the nearest-neighbour distances from `a`.
pub fn cloud_distance(a: &PointCloud, b: &PointCloud) -> Result<DistanceReport> {
    Ok(summarize(directed_distances(a, b)?))
}

/// Both directions: Hausdorff is the larger directed Hausdorff, the mean is
/// the average of the two directed means, and percentiles are taken over the
/// pooled distances.
pub fn symmetric_cloud_distance(a: &PointCloud, b: &PointCloud) -> Result<DistanceReport> {
    let ab = directed_distances(a, b)?;
    let ba = directed_distances(b, a)?;
    let (fwd, back) = (summarize(ab.clone()), summarize(ba.clone()));
    let mut pooled = summarize(ab.into_iter().chain(ba).collect());
    pooled.mean = (fwd.mean + back.mean) / 2.0;
    pooled.hausdorff = fwd.hausdorff.max(back.hausdorff);
    Ok(pooled)
}

/// Distances from each point of `cloud` to the closest point of the mesh
/// surface, summarized like [`cloud_distance`]. Exhaustive over triangles;
/// meant for the small meshes of synthetic scenes.
pub fn surface_distance(cloud: &PointCloud, mesh: &TriangleMesh) -> Result<DistanceReport> {
    if cloud.is_empty() || mesh.triangles().is_empty() {
        return Err(Error::invalid("surface distance needs a non-empty cloud and mesh"));
    }
    let tris: Vec<_> = (0..mesh.triangles().len()).map(|t| mesh.triangle(t)).collect();
    let d = cloud
        .points()
        .par_iter()
        .map(|p| tris.iter().map(|t| point_triangle_distance(p, t)).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(summarize(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpFnReport {
    pub false_positive: usize,
    pub false_negative: usize,
    pub ground_truth_occupied: usize,
}

/// Compares the occupied cells of `grid` with `truth`, counting only cells
/// whose center lies in `region`.
pub fn fp_fn_count(grid: &OccupancyGrid, truth: &OccupancyGrid, region: &AxisAlignedBox) -> Result<FpFnReport> {
    if grid.leaf() != truth.leaf() || grid.origin() != truth.origin() {
        return Err(Error::invalid(format!(
            "grids differ: leaf {} vs {}, origin {:?} vs {:?}",
            grid.leaf(),
            truth.leaf(),
            grid.origin().coords.as_slice(),
            truth.origin().coords.as_slice()
        )));
    }
    let inside = |k: &&[i64; 3]| region.contains(&grid.cell_center(0, k));
    let truth_in: Vec<_> = truth.occupied().iter().filter(inside).collect();
    Ok(FpFnReport {
        false_positive: grid
            .occupied()
            .iter()
            .filter(inside)
            .filter(|k| !truth.occupied().contains(*k))
            .count(),
        false_negative: truth_in.iter().filter(|k| !grid.occupied().contains(**k)).count(),
        ground_truth_occupied: truth_in.len(),
    })
}

/// Pixel rectangle `[u, u + width) x [v, v + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRegion {
    pub u: usize,
    pub v: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRegion {
    /// The `size x size` square centered in a `width x height` image.
    pub fn centered(width: usize, height: usize, size: usize) -> PixelRegion {
        PixelRegion {
            u: width.saturating_sub(size) / 2,
            v: height.saturating_sub(size) / 2,
            width: size,
            height: size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoiseStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Largest `|d - mean|`.
    pub max_deviation: f64,
    pub samples: usize,
}

/// Statistics of the valid depths in `region` over all frames.
pub fn depth_noise_stats(frames: &[DepthFrame], region: PixelRegion) -> Result<DepthNoiseStats> {
    let mut values = Vec::new();
    for (n, f) in frames.iter().enumerate() {
        if region.width == 0
            || region.height == 0
            || region.u + region.width > f.width()
            || region.v + region.height > f.height()
        {
            return Err(Error::invalid(format!(
                "frame {n}: region {region:?} outside {}x{} image",
                f.width(),
                f.height()
            )));
        }
        for v in region.v..region.v + region.height {
            for u in region.u..region.u + region.width {
                let d = f.depth_at(u, v);
                if d > 0.0 {
                    values.push(d);
                }
            }
        }
    }
    if values.is_empty() {
        return Err(Error::invalid("no valid depth samples in region"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(DepthNoiseStats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
        max_deviation: values.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max),
        samples: values.len(),
    })
}

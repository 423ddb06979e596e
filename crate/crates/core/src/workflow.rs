//! The two end-to-end stages built from the modules: frames to a cleaned map,
//! and a referenced map to a padded occupancy grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{run_pipeline, FilterConfig, PipelineReport};
use crate::geom::{Point3, PointCloud, RigidTransform};
use crate::occupancy::{build_grid, pad, reach_filter, remove_robot_points, OccupancyGrid};
use crate::referencing::{model_cloud, RobotModel};
use crate::registration::{fuse_frames, DepthFrame, IcpParams};

/// Fuses the frames (with ICP refinement if `use_icp`) and runs the cleaning
/// pipeline on the result.
pub fn map_frames(
    frames: &[DepthFrame],
    filters: &FilterConfig,
    use_icp: bool,
    icp: &IcpParams,
) -> Result<(PointCloud, PipelineReport)> {
    filters.validate()?;
    let fused = fuse_frames(frames, use_icp, icp, (filters.d_cutoff_min, filters.d_cutoff_max))?;
    log::info!("fused {} frames into {} points", frames.len(), fused.len());
    run_pipeline(&fused, filters)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOptions {
    /// Cell side of the occupancy grid, meters.
    pub leaf: f64,
    pub padding_levels: usize,
    /// Overrides the robot model's reach.
    pub d_reach: Option<f64>,
    /// Scene points this close to the robot model are removed; defaults to `leaf`.
    pub robot_tolerance: Option<f64>,
    /// Robot model sampling density for the removal step.
    pub points_per_m2: f64,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            leaf: 0.05,
            padding_levels: 1,
            d_reach: None,
            robot_tolerance: None,
            points_per_m2: 20_000.0,
            seed: 0,
        }
    }
}

/// Reach filter, robot-point removal, voxelization in the robot frame (grid
/// anchored at the robot base) and padding.
pub fn grid_from_map(
    map: &PointCloud,
    robot_to_map: &RigidTransform,
    model: &RobotModel,
    opts: &GridOptions,
) -> Result<OccupancyGrid> {
    if !(opts.leaf > 0.0) {
        return Err(Error::config(format!("grid leaf must be positive, got {}", opts.leaf)));
    }
    let reach = opts.d_reach.unwrap_or(model.reach());
    let near = reach_filter(map, robot_to_map, reach)?;
    let robot = model_cloud(model, opts.points_per_m2, opts.seed)?.transformed(robot_to_map);
    let scene = remove_robot_points(&near, &robot, opts.robot_tolerance.unwrap_or(opts.leaf))?;
    log::info!(
        "grid input: {} points, {} within reach, {} after robot removal",
        map.len(),
        near.len(),
        scene.len()
    );
    let local = scene.transformed(&robot_to_map.inverse());
    let grid = build_grid(&local, opts.leaf, Point3::origin())?;
    Ok(pad(&grid, opts.padding_levels))
}

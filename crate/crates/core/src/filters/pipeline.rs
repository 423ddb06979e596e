use serde::Serialize;

use super::{cutoff_filter, mls_smooth, radius_outlier_removal, ransac_plane_snap, voxel_downsample, FilterConfig};
use crate::error::Result;
use crate::geom::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCount {
    pub stage: &'static str,
    pub points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineReport {
    pub input: usize,
    pub stages: Vec<StageCount>,
    pub planes: usize,
}

impl PipelineReport {
    pub fn count(&self, stage: &str) -> Option<usize> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.points)
    }
}

/// Cutoff, voxel downsample, outlier removal, MLS, RANSAC snap, in that order.
pub fn run_pipeline(cloud: &PointCloud, cfg: &FilterConfig) -> Result<(PointCloud, PipelineReport)> {
    cfg.validate()?;
    let mut report = PipelineReport {
        input: cloud.len(),
        ..Default::default()
    };
    if cloud.is_empty() {
        return Ok((cloud.clone(), report));
    }
    let mut record = |stage: &'static str, c: &PointCloud| {
        log::info!("{stage}: {} points", c.len());
        report.stages.push(StageCount { stage, points: c.len() });
    };
    let c = cutoff_filter(cloud, cfg.d_cutoff_min, cfg.d_cutoff_max)?;
    record("cutoff", &c);
    let c = voxel_downsample(&c, cfg.voxel_leaf)?;
    record("downsample", &c);
    let c = radius_outlier_removal(&c, cfg.outlier_radius, cfg.outlier_min_neighbours)?;
    record("outlier", &c);
    let c = mls_smooth(&c, cfg.mls_radius, cfg.mls_order)?;
    record("mls", &c);
    let (c, planes) = ransac_plane_snap(&c, cfg)?;
    record("ransac", &c);
    log::info!("ransac: {} planes", planes.len());
    report.planes = planes.len();
    Ok((c, report))
}

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, Point3, PointCloud, RigidTransform, Vector3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMS changes by less than this between iterations (meters).
    pub convergence_eps: f64,
    /// Correspondences farther apart than this are ignored (meters).
    pub max_correspondence: f64,
    /// Minimum fraction of source points with a correspondence at exit.
    pub fitness_min_overlap: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            convergence_eps: 1e-5,
            max_correspondence: 0.1,
            fitness_min_overlap: 0.3,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("icp max_iterations must be at least 1"));
        }
        if !(self.convergence_eps > 0.0) || !(self.max_correspondence > 0.0) {
            return Err(Error::config("icp convergence_eps and max_correspondence must be positive"));
        }
        if !(self.fitness_min_overlap > 0.0 && self.fitness_min_overlap <= 1.0) {
            return Err(Error::config(format!(
                "icp fitness_min_overlap must be in (0, 1], got {}",
                self.fitness_min_overlap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// RMS distance over the correspondences at the final transform.
    pub rms: f64,
    pub overlap_fraction: f64,
    /// Reached `convergence_eps` with enough overlap.
    pub converged: bool,
    pub iterations: usize,
    /// Truncated RMS, `sqrt(mean(min(d², max_correspondence²)))` over all
    /// source points, at the start of every iteration. Non-increasing.
    pub history: Vec<f64>,
}

struct Matches {
    pairs: Vec<(usize, usize)>,
    sum_sq: f64,
    truncated_rms: f64,
}

fn correspond(moved: &[Point3], target: &KdTree, gate: f64) -> Matches {
    let found: Vec<Option<(usize, f64)>> = moved
        .par_iter()
        .map(|p| target.nearest_within(p, gate))
        .collect();
    let mut pairs = Vec::new();
    let mut sum_sq = 0.0;
    let mut truncated = 0.0;
    for (i, f) in found.into_iter().enumerate() {
        match f {
            Some((j, d)) => {
                pairs.push((i, j));
                sum_sq += d * d;
                truncated += d * d;
            }
            None => truncated += gate * gate,
        }
    }
    Matches {
        pairs,
        sum_sq,
        truncated_rms: (truncated / moved.len() as f64).sqrt(),
    }
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`, from the SVD
/// of the cross-covariance. A reflection is turned into the closest rotation
/// by flipping the direction of the smallest singular value.
pub fn solve_rigid(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::invalid("rigid solve needs equally sized, non-empty point sets"));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let mut flip = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // nalgebra sorts singular values in descending order.
        flip[(2, 2)] = -1.0;
    }
    let r = v * flip * u.transpose();
    let t = cd - r * cs;
    RigidTransform::from_parts(r, t)
}

/// Point-to-point ICP aligning `source` onto the points indexed by `target`,
/// starting from `guess`.
pub fn icp(source: &PointCloud, target: &KdTree, guess: &RigidTransform, params: &IcpParams) -> Result<IcpResult> {
    params.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("icp needs non-empty source and target clouds"));
    }
    let gate = params.max_correspondence;
    let mut transform = *guess;
    let mut history = Vec::new();
    let mut reached = false;
    let mut iterations = 0;
    let mut moved: Vec<Point3> = source.iter().map(|p| transform.apply(p)).collect();
    let mut matches = correspond(&moved, target, gate);

    while iterations < params.max_iterations {
        history.push(matches.truncated_rms);
        if let [.., prev, last] = history[..] {
            if (prev - last).abs() < params.convergence_eps {
                reached = true;
                break;
            }
        }
        if matches.pairs.len() < 3 {
            break;
        }
        let src: Vec<Point3> = matches.pairs.iter().map(|&(i, _)| moved[i]).collect();
        let dst: Vec<Point3> = matches.pairs.iter().map(|&(_, j)| *target.point(j)).collect();
        let delta = solve_rigid(&src, &dst)?;
        transform = delta.compose(&transform);
        iterations += 1;
        moved = source.iter().map(|p| transform.apply(p)).collect();
        matches = correspond(&moved, target, gate);
    }
    if !reached && iterations == params.max_iterations {
        history.push(matches.truncated_rms);
    }

    let overlap_fraction = matches.pairs.len() as f64 / source.len() as f64;
    let rms = if matches.pairs.is_empty() {
        0.0
    } else {
        (matches.sum_sq / matches.pairs.len() as f64).sqrt()
    };
    let converged = reached && overlap_fraction >= params.fitness_min_overlap;
    log::debug!(
        "icp: {iterations} iterations, rms {rms:.6}, overlap {overlap_fraction:.3}, converged {converged}"
    );
    Ok(IcpResult {
        transform,
        rms,
        overlap_fraction,
        converged,
        iterations,
        history,
    })
}

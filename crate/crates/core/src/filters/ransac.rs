use nalgebra::{Matrix3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::FilterConfig;
use crate::error::Result;
use crate::geom::{Point3, PointCloud, Vector3};

/// Plane `{p : normal·p + offset = 0}` with the indices (into the input
/// cloud) of the points assigned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3,
    pub offset: f64,
    pub inliers: Vec<usize>,
}

impl PlaneModel {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }
}

#[derive(Clone, Copy)]
struct Plane {
    normal: Vector3,
    offset: f64,
}

impl Plane {
    fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Plane> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-12 {
            return None;
        }
        let normal = canonical(n / len);
        Some(Plane {
            normal,
            offset: -normal.dot(&a.coords),
        })
    }

    fn distance(&self, p: &Point3) -> f64 {
        (self.normal.dot(&p.coords) + self.offset).abs()
    }
}

/// Sign convention: the first significant component of the normal is
/// positive, checked in z, y, x order.
fn canonical(n: Vector3) -> Vector3 {
    for axis in [2, 1, 0] {
        if n[axis].abs() > 1e-12 {
            return if n[axis] < 0.0 { -n } else { n };
        }
    }
    n
}

fn least_squares_plane(points: &[Point3], indices: &[usize]) -> Option<Plane> {
    let n = indices.len() as f64;
    let centroid = indices
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i].coords)
        / n;
    let mut cov = Matrix3::zeros();
    for &i in indices {
        let d = points[i].coords - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let smallest = eig.eigenvalues.imin();
    let normal: Vector3 = eig.eigenvectors.column(smallest).into();
    let normal = canonical(normal.normalize());
    normal.iter().all(|v| v.is_finite()).then(|| Plane {
        normal,
        offset: -normal.dot(&centroid),
    })
}

/// Stream id for one RANSAC draw, so every (plane, iteration) pair has its
/// own random sequence regardless of evaluation order.
fn draw_rng(seed: u64, plane: usize, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((plane as u64) << 32) | iteration as u64);
    rng
}

/// Repeatedly extracts the plane with the largest consensus among the
/// not-yet-assigned points and projects its inliers onto it.
///
/// Each round draws `ransac_iterations` 3-point hypotheses, keeps the one
/// with most points within `ransac_dist` (earliest iteration on ties), refits
/// it to those inliers by least squares, and stops once the best consensus
/// falls below `ransac_min_inliers` or `ransac_max_planes` planes are found.
/// A point near two planes belongs to the first one found. Planes are
/// returned in discovery order, which is descending inlier count.
pub fn ransac_plane_snap(cloud: &PointCloud, cfg: &FilterConfig) -> Result<(PointCloud, Vec<PlaneModel>)> {
    cfg.validate()?;
    let mut points = cloud.points().to_vec();
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut planes = Vec::new();
    let threshold = cfg.ransac_min_inliers.max(3);

    for round in 0..cfg.ransac_max_planes {
        if remaining.len() < threshold {
            break;
        }
        let best = (0..cfg.ransac_iterations)
            .into_par_iter()
            .filter_map(|it| {
                let mut rng = draw_rng(cfg.rng_seed, round, it);
                let s = rand::seq::index::sample(&mut rng, remaining.len(), 3);
                let [a, b, c] = [0, 1, 2].map(|k| &points[remaining[s.index(k)]]);
                let plane = Plane::through(a, b, c)?;
                let count = remaining
                    .iter()
                    .filter(|&&i| plane.distance(&points[i]) <= cfg.ransac_dist)
                    .count();
                Some((count, it, plane))
            })
            .reduce_with(|x, y| {
                if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }
            });
        let Some((count, _, hypothesis)) = best else { break };
        if count < cfg.ransac_min_inliers {
            break;
        }
        let inliers_of = |plane: &Plane| -> Vec<usize> {
            remaining
                .iter()
                .copied()
                .filter(|&i| plane.distance(&points[i]) <= cfg.ransac_dist)
                .collect()
        };
        let mut plane = hypothesis;
        let mut inliers = inliers_of(&plane);
        if let Some(refined) = least_squares_plane(&points, &inliers) {
            let refined_inliers = inliers_of(&refined);
            if refined_inliers.len() >= inliers.len() {
                plane = refined;
                inliers = refined_inliers;
            }
        }
        for &i in &inliers {
            let p = points[i];
            points[i] = p - plane.normal * (plane.normal.dot(&p.coords) + plane.offset);
        }
        let assigned: std::collections::HashSet<usize> = inliers.iter().copied().collect();
        remaining.retain(|i| !assigned.contains(i));
        log::debug!(
            "ransac plane {round}: normal {:?}, {} inliers",
            plane.normal.as_slice(),
            inliers.len()
        );
        planes.push(PlaneModel {
            normal: plane.normal,
            offset: plane.offset,
            inliers,
        });
    }
    let out = PointCloud::from_parts_unchecked(points, cloud.capture_distance().map(<[f64]>::to_vec));
    Ok((out, planes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn noisy_plane(rng: &mut ChaCha8Rng, n: usize, map: impl Fn(f64, f64, f64) -> Point3) -> Vec<Point3> {
        let noise = Normal::new(0.0, 0.003).unwrap();
        (0..n)
            .map(|_| {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                map(a, b, noise.sample(rng))
            })
            .collect()
    }

    fn angle_deg(a: &Vector3, b: &Vector3) -> f64 {
        a.dot(b).abs().min(1.0).acos().to_degrees()
    }

    #[test]
    fn single_noisy_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = noisy_plane(&mut rng, 10_000, |x, y, n| Point3::new(x, y, n));
        let cloud = PointCloud::from_points(pts).unwrap();
        let (out, planes) = ransac_plane_snap(&cloud, &FilterConfig::default()).unwrap();
        assert_eq!(planes.len(), 1);
        assert!(angle_deg(&planes[0].normal, &Vector3::z()) < 0.5);
        for &i in &planes[0].inliers {
            assert!(planes[0].signed_distance(&out.points()[i]).abs() <= 1e-9);
        }
        // Noise truncated far below 2 cm, so nearly everything is an inlier.
        assert!(planes[0].inliers.len() > 9_900);
    }

    #[test]
    fn unreachable_consensus_leaves_cloud_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point3> = (0..100)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let cloud = PointCloud::from_points(pts).unwrap();
        let (out, planes) = ransac_plane_snap(&cloud, &FilterConfig::default()).unwrap();
        assert!(planes.is_empty());
        assert_eq!(out, cloud);
    }

    #[test]
    fn empty_cloud_is_fine() {
        let (out, planes) = ransac_plane_snap(&PointCloud::new(), &FilterConfig::default()).unwrap();
        assert!(out.is_empty() && planes.is_empty());
    }

    #[test]
    fn two_orthogonal_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = noisy_plane(&mut rng, 10_000, |x, y, n| Point3::new(x, y, n));
        pts.extend(noisy_plane(&mut rng, 10_000, |x, z, n| Point3::new(x, 1.5 + n, z + 1.2)));
        let cloud = PointCloud::from_points(pts).unwrap();
        let (out, planes) = ransac_plane_snap(&cloud, &FilterConfig::default()).unwrap();
        assert_eq!(planes.len(), 2);
        let mut found: Vec<f64> = planes
            .iter()
            .map(|p| angle_deg(&p.normal, &Vector3::z()).min(angle_deg(&p.normal, &Vector3::y())))
            .collect();
        found.sort_by(f64::total_cmp);
        assert!(found.iter().all(|&a| a < 0.5), "{found:?}");
        assert!(planes[0].inliers.len() >= planes[1].inliers.len());
        for plane in &planes {
            for &i in &plane.inliers {
                assert!(plane.signed_distance(&out.points()[i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn snapping_is_idempotent_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = noisy_plane(&mut rng, 3_000, |x, y, n| Point3::new(x, y, n));
        pts.extend(noisy_plane(&mut rng, 2_000, |y, z, n| Point3::new(-1.2 + n, y, z + 1.1)));
        let cloud = PointCloud::from_points(pts).unwrap();
        let cfg = FilterConfig::default();
        let (once, planes) = ransac_plane_snap(&cloud, &cfg).unwrap();
        let (again, _) = ransac_plane_snap(&cloud, &cfg).unwrap();
        assert_eq!(once, again);
        let (twice, planes2) = ransac_plane_snap(&once, &cfg).unwrap();
        assert_eq!(planes.len(), planes2.len());
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}

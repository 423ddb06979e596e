use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{KdTree, Point3, PointCloud, Vector3};

/// Moving-least-squares smoothing.
///
/// For each point the neighbours within `radius` get Gaussian weights
/// `exp(-d² / 2h²)` with bandwidth `h = radius / 2`. A weighted PCA plane
/// gives a local frame; a polynomial height field of total degree `order`
/// (1 or 2) is fitted over it by weighted least squares, and the point is
/// replaced by the fitted surface point above its foot on the plane.
///
/// Points with fewer than `(order+1)(order+2)/2` neighbours (self included)
/// are passed through. A projection that would move a point farther than
/// `radius` is treated as a failed fit and the point is also passed through.
pub fn mls_smooth(cloud: &PointCloud, radius: f64, order: usize) -> Result<PointCloud> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("MLS radius must be positive, got {radius}")));
    }
    if !(1..=2).contains(&order) {
        return Err(Error::invalid(format!("MLS order must be 1 or 2, got {order}")));
    }
    let tree = KdTree::build(cloud);
    let min_neighbours = (order + 1) * (order + 2) / 2;
    let bandwidth = radius / 2.0;
    let smoothed: Vec<Point3> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let nbrs = tree.radius(p, radius).unwrap_or_default();
            if nbrs.len() < min_neighbours {
                return *p;
            }
            match project(p, &nbrs, tree.points(), bandwidth, radius, order) {
                Some(q) if (q - p).norm() <= radius => q,
                _ => *p,
            }
        })
        .collect();
    Ok(PointCloud::from_parts_unchecked(
        smoothed,
        cloud.capture_distance().map(<[f64]>::to_vec),
    ))
}

fn project(
    p: &Point3,
    nbrs: &[usize],
    points: &[Point3],
    bandwidth: f64,
    radius: f64,
    order: usize,
) -> Option<Point3> {
    let inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let weights: Vec<f64> = nbrs
        .iter()
        .map(|&j| (-(points[j] - p).norm_squared() * inv_two_h2).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    let centroid = nbrs
        .iter()
        .zip(&weights)
        .fold(Vector3::zeros(), |acc, (&j, w)| acc + points[j].coords * *w)
        / wsum;
    let mut cov = Matrix3::zeros();
    for (&j, w) in nbrs.iter().zip(&weights) {
        let d = points[j].coords - centroid;
        cov += d * d.transpose() * *w;
    }
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let normal: Vector3 = eig.eigenvectors.column(idx[0]).into();
    let u: Vector3 = eig.eigenvectors.column(idx[2]).into();
    let v = normal.cross(&u);

    // Foot of the query point on the weighted plane.
    let origin = p.coords - normal * normal.dot(&(p.coords - centroid));

    let terms = (order + 1) * (order + 2) / 2;
    // Weighted normal equations; at most 6x6.
    let mut ata = DMatrix::<f64>::zeros(terms, terms);
    let mut atb = DVector::<f64>::zeros(terms);
    for (&j, w) in nbrs.iter().zip(&weights) {
        let d = points[j].coords - origin;
        // Plane coordinates scaled by the radius keep the system well conditioned.
        let (x, y) = (d.dot(&u) / radius, d.dot(&v) / radius);
        let h = d.dot(&normal);
        let basis = [1.0, x, y, x * x, x * y, y * y];
        for r in 0..terms {
            atb[r] += w * basis[r] * h;
            for c in 0..terms {
                ata[(r, c)] += w * basis[r] * basis[c];
            }
        }
    }
    let coeffs = match ata.clone().cholesky() {
        Some(ch) => ch.solve(&atb),
        None => ata.svd(true, true).solve(&atb, 1e-12).ok()?,
    };
    let height = coeffs[0];
    if !height.is_finite() {
        return None;
    }
    Some(Point3::from(origin + normal * height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn planar_grid(spacing: f64, n: usize) -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        pts
    }

    #[test]
    fn tilted_plane_unchanged() {
        let t = crate::geom::RigidTransform::from_euler(0.4, -0.3, 0.2, Vector3::new(1.0, 2.0, 3.0));
        let pts: Vec<Point3> = planar_grid(0.02, 30).iter().map(|p| t.apply(p)).collect();
        let cloud = PointCloud::from_points(pts).unwrap();
        for order in [1, 2] {
            let out = mls_smooth(&cloud, 0.1, order).unwrap();
            for (a, b) in out.iter().zip(cloud.iter()) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn single_point_passes_through() {
        let cloud = PointCloud::from_points(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(mls_smooth(&cloud, 0.1, 2).unwrap(), cloud);
    }

    #[test]
    fn argument_checks() {
        let cloud = PointCloud::new();
        assert!(mls_smooth(&cloud, 0.0, 2).is_err());
        assert!(mls_smooth(&cloud, 0.1, 3).is_err());
    }

    #[test]
    fn halves_noise_on_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.003).unwrap();
        let pts: Vec<Point3> = planar_grid(0.01, 60)
            .into_iter()
            .map(|p| Point3::new(p.x, p.y, noise.sample(&mut rng)))
            .collect();
        let rms = |c: &[Point3]| (c.iter().map(|p| p.z * p.z).sum::<f64>() / c.len() as f64).sqrt();
        let cloud = PointCloud::from_points(pts).unwrap();
        let out = mls_smooth(&cloud, 0.1, 2).unwrap();
        let (before, after) = (rms(cloud.points()), rms(out.points()));
        assert!(after < 0.5 * before, "rms {before} -> {after}");
        for (a, b) in out.iter().zip(cloud.iter()) {
            assert!((a - b).norm() <= 0.1);
        }
    }
}

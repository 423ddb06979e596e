use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, TriangleMesh};

/// Draws `n` points uniformly over the mesh surface.
///
/// A triangle is picked with probability proportional to its area
/// (degenerate triangles never), then a point inside it via
/// `(1-√r1)·A + √r1(1-r2)·B + √r1·r2·C`.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    let areas: Vec<f64> = (0..mesh.triangles().len())
        .map(|t| if mesh.is_degenerate(t) { 0.0 } else { mesh.triangle_area(t) })
        .collect();
    let pick = WeightedIndex::new(&areas)
        .map_err(|_| Error::invalid("mesh has no non-degenerate triangle to sample"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = mesh.triangle(pick.sample(&mut rng));
            let s = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2))
        })
        .collect();
    Ok(PointCloud::from_parts_unchecked(points, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn barycentric(p: &Point3, [a, b, c]: [Point3; 3]) -> (f64, f64, f64) {
        let (v0, v1, v2) = (b - a, c - a, p - a);
        let (d00, d01, d11) = (v0.dot(&v0), v0.dot(&v1), v1.dot(&v1));
        let (d20, d21) = (v2.dot(&v0), v2.dot(&v1));
        let den = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / den;
        let w = (d00 * d21 - d01 * d20) / den;
        (1.0 - v - w, v, w)
    }

    #[test]
    fn samples_stay_inside_triangle() {
        let tri = [Point3::new(0.0, 0.0, 1.0), Point3::new(2.0, 0.5, 1.0), Point3::new(0.3, 1.7, 1.4)];
        let mesh = TriangleMesh::new(tri.to_vec(), vec![[0, 1, 2]]).unwrap();
        let cloud = sample_mesh(&mesh, 1_000, 3).unwrap();
        assert_eq!(cloud.len(), 1_000);
        let normal = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        for p in cloud.iter() {
            let (u, v, w) = barycentric(p, tri);
            for x in [u, v, w] {
                assert!((-1e-12..=1.0 + 1e-12).contains(&x));
            }
            assert!((u + v + w - 1.0).abs() < 1e-12);
            assert!(normal.dot(&(p - tri[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_samples_and_degenerate_meshes() {
        let cube = TriangleMesh::cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0), false);
        assert!(sample_mesh(&cube, 0, 1).unwrap().is_empty());
        let flat = TriangleMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(sample_mesh(&flat, 10, 1).is_err());
        assert!(sample_mesh(&TriangleMesh::default(), 0, 1).is_err());
    }

    #[test]
    fn degenerate_triangles_are_skipped() {
        let v = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(5.0, 5.0, 5.0),
        ];
        let mesh = TriangleMesh::new(v, vec![[3, 3, 3], [0, 1, 2]]).unwrap();
        let cloud = sample_mesh(&mesh, 200, 8).unwrap();
        assert!(cloud.iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let cube = TriangleMesh::cuboid(Point3::origin(), Point3::new(1.0, 2.0, 3.0), false);
        assert_eq!(sample_mesh(&cube, 500, 42).unwrap(), sample_mesh(&cube, 500, 42).unwrap());
        assert_ne!(sample_mesh(&cube, 500, 42).unwrap(), sample_mesh(&cube, 500, 43).unwrap());
    }

    #[test]
    fn area_weighting_binomial() {
        // Disjoint triangles with areas 0.9 and 0.1.
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.8, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(10.2, 0.0, 0.0),
            Point3::new(10.0, 1.0, 0.0),
        ];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let n = 100_000;
        let cloud = sample_mesh(&mesh, n, 17).unwrap();
        let big = cloud.iter().filter(|p| p.x < 5.0).count() as f64;
        let sigma = (n as f64 * 0.9 * 0.1).sqrt();
        assert!((big - 0.9 * n as f64).abs() <= 3.0 * sigma, "{big}");
    }

    #[test]
    fn quadrant_uniformity_on_unit_square() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let n = 40_000;
        let cloud = sample_mesh(&mesh, n, 23).unwrap();
        let mut counts = [0usize; 4];
        for p in cloud.iter() {
            counts[(p.x >= 0.5) as usize + 2 * (p.y >= 0.5) as usize] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}

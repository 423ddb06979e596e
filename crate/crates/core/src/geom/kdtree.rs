use super::{Point3, PointCloud};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    /// Points in `left` have `coord <= value`, points in `right` have `coord >= value`.
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Balanced kD-tree over a frozen set of points.
///
/// Queries return exactly what an exhaustive scan would: squared distances are
/// compared as `(p - q).norm_squared()` and equal distances resolve to the
/// lowest point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> KdTree {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<Point3>) -> KdTree {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            build_node(&points, &mut order, 0, &mut nodes);
        }
        KdTree {
            points,
            order,
            nodes,
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

    pub fn point(&self, index: usize) -> &Point3 {
        &self.points[index]
    }

    /// Index of and distance to the closest point; `None` on an empty tree.
    pub fn nearest(&self, query: &Point3) -> Option<(usize, f64)> {
        self.nearest_bounded(query, f64::INFINITY)
    }

    /// Like [`nearest`](Self::nearest) but only considers points at distance
    /// `<= max_distance`.
    pub fn nearest_within(&self, query: &Point3, max_distance: f64) -> Option<(usize, f64)> {
        if max_distance < 0.0 {
            return None;
        }
        self.nearest_bounded(query, max_distance * max_distance)
    }

    fn nearest_bounded(&self, query: &Point3, bound_sq: f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Best {
            index: usize::MAX,
            dist_sq: bound_sq,
        };
        self.nearest_rec(0, query, &mut best);
        (best.index != usize::MAX).then(|| (best.index, best.dist_sq.sqrt()))
    }

    fn nearest_rec(&self, node: usize, q: &Point3, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.dist_sq || (d == best.dist_sq && i < best.index) {
                        best.dist_sq = d;
                        best.index = i;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.dist_sq {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// Indices of all points with `|p - query| <= radius`, ascending.
    pub fn radius(&self, query: &Point3, radius: f64) -> crate::Result<Vec<usize>> {
        if radius < 0.0 || radius.is_nan() {
            return Err(crate::Error::invalid(format!(
                "search radius must be non-negative, got {radius}"
            )));
        }
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Number of points within `radius` of `query`.
    pub fn count_within(&self, query: &Point3, radius: f64) -> crate::Result<usize> {
        self.radius(query, radius).map(|v| v.len())
    }

    fn radius_rec(&self, node: usize, q: &Point3, r_sq: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r_sq),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r_sq, out);
                if diff * diff <= r_sq {
                    self.radius_rec(far, q, r_sq, out);
                }
            }
        }
    }
}

struct Best {
    index: usize,
    dist_sq: f64,
}

fn build_node(points: &[Point3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    // Split along the axis of widest spread, at the median.
    let mut lo = points[order[0]];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let spread = hi - lo;
    let axis = spread.imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build_node(points, l, offset, nodes);
    let right = build_node(points, r, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    fn scan_nearest(points: &[Point3], q: &Point3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, d)| (i, d.sqrt()))
    }

    fn scan_radius(points: &[Point3], q: &Point3, r: f64) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| (points[i] - q).norm_squared() <= r * r)
            .collect()
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::from_points(vec![]);
        assert!(tree.is_empty());
        assert_eq!(tree.nearest(&Point3::origin()), None);
        assert!(tree.radius(&Point3::origin(), 10.0).unwrap().is_empty());
    }

    #[test]
    fn single_point() {
        let tree = KdTree::from_points(vec![Point3::origin()]);
        let (i, d) = tree.nearest(&Point3::new(5.0, 5.0, 5.0)).unwrap();
        assert_eq!(i, 0);
        assert!((d - 75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn midline_query() {
        let tree = KdTree::from_points(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]);
        let (i, d) = tree.nearest(&Point3::new(0.6, 0.0, 0.0)).unwrap();
        assert_eq!(i, 1);
        assert!((d - 0.4).abs() < 1e-12);
        assert_eq!(tree.nearest(&Point3::new(1.0, 0.0, 0.0)), Some((1, 0.0)));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pts: Vec<Point3> = (0..40)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 40.0;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .chain([Point3::new(1.0, 0.0, 0.0)])
            .collect();
        let tree = KdTree::from_points(pts.clone());
        // Point 40 duplicates point 0.
        assert_eq!(tree.nearest(&Point3::new(2.0, 0.0, 0.0)).unwrap().0, 0);
        let dup: Vec<Point3> = vec![Point3::new(0.5, 0.5, 0.5); 20];
        let tree = KdTree::from_points(dup);
        assert_eq!(tree.nearest(&Point3::origin()).unwrap().0, 0);
    }

    #[test]
    fn radius_boundary_inclusive() {
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(3.0, 0.0, 0.0)];
        let tree = KdTree::from_points(pts);
        assert_eq!(tree.radius(&Point3::origin(), 0.0).unwrap(), vec![0]);
        assert_eq!(tree.radius(&Point3::origin(), 1.0).unwrap(), vec![0, 1]);
        assert_eq!(tree.radius(&Point3::origin(), 100.0).unwrap(), vec![0, 1, 2]);
        assert!(tree.radius(&Point3::origin(), -1.0).is_err());
    }

    #[test]
    fn nearest_within_bound() {
        let tree = KdTree::from_points(vec![Point3::new(1.0, 0.0, 0.0)]);
        assert_eq!(tree.nearest_within(&Point3::origin(), 0.5), None);
        assert_eq!(tree.nearest_within(&Point3::origin(), 1.0), Some((0, 1.0)));
    }

    #[test]
    fn matches_linear_scan_on_large_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 10_000);
        let tree = KdTree::from_points(pts.clone());
        for _ in 0..1_000 {
            let q = Point3::new(rng.random_range(-0.2..1.2), rng.random(), rng.random());
            assert_eq!(tree.nearest(&q), scan_nearest(&pts, &q));
            let r = rng.random_range(0.0..0.1);
            assert_eq!(tree.radius(&q, r).unwrap(), scan_radius(&pts, &q, r));
        }
    }

    #[test]
    fn matches_linear_scan_on_randomized_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for instance in 0..100 {
            // Sizes spread log-uniformly over 1..=10_000.
            let n = (10f64.powf(instance as f64 / 99.0 * 4.0)).round() as usize;
            let mut pts = random_points(&mut rng, n);
            // Quantize some instances to force exact ties.
            if instance % 3 == 0 {
                for p in &mut pts {
                    *p = Point3::new((p.x * 8.0).round(), (p.y * 8.0).round(), (p.z * 8.0).round());
                }
            }
            let tree = KdTree::from_points(pts.clone());
            for _ in 0..20 {
                let q = Point3::new(rng.random(), rng.random(), rng.random()) * 8.0;
                let q = if instance % 3 == 0 { Point3::from(q.coords.map(f64::round)) } else { q };
                assert_eq!(tree.nearest(&q), scan_nearest(&pts, &q), "instance {instance}");
                let r = rng.random_range(0.0..2.0);
                assert_eq!(tree.radius(&q, r).unwrap(), scan_radius(&pts, &q, r));
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 500);
        let a = KdTree::from_points(pts.clone());
        let b = KdTree::from_points(pts);
        assert_eq!(a.order, b.order);
    }
}

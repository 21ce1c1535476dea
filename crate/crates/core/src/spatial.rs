//! Spatial acceleration structures: a bucket grid for fixed-radius pair
//! enumeration and a k-d tree for nearest-neighbour queries.

use std::collections::HashMap;

use rayon::prelude::*;

pub type Point = [f64; 3];

#[inline]
pub fn dist_sq(a: &Point, b: &Point) -> f64 {
    let dz = a[0] - b[0];
    let dy = a[1] - b[1];
    let dx = a[2] - b[2];
    dz * dz + dy * dy + dx * dx
}

/// Uniform bucket grid with cubic cells of side `cell`.
pub struct HashGrid {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl HashGrid {
    pub fn new(points: &[Point], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key_for(p, cell)).or_default().push(i);
        }
        HashGrid { cell, buckets }
    }

    fn key_for(p: &Point, cell: f64) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    /// All unordered pairs `(i, j)`, `i < j`, with `|p_i - p_j| <= radius`,
    /// sorted ascending. `radius` must not exceed the cell size.
    pub fn pairs_within(&self, points: &[Point], radius: f64) -> Vec<(usize, usize)> {
        assert!(radius <= self.cell, "radius exceeds grid cell size");
        let r2 = radius * radius;
        let mut pairs: Vec<(usize, usize)> = points
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, p)| {
                let k = Self::key_for(p, self.cell);
                let mut local = Vec::new();
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let key = [k[0] + dz, k[1] + dy, k[2] + dx];
                            if let Some(bucket) = self.buckets.get(&key) {
                                for &j in bucket {
                                    if j > i && dist_sq(p, &points[j]) <= r2 {
                                        local.push((i, j));
                                    }
                                }
                            }
                        }
                    }
                }
                local
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static 3D k-d tree over a borrowed point set.
pub struct KdTree<'a> {
    points: &'a [Point],
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build(points, &mut idx, &mut nodes);
        KdTree {
            points,
            nodes,
            root,
        }
    }

    fn build(points: &[Point], idx: &mut [usize], nodes: &mut Vec<KdNode>) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = widest_axis(points, idx);
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |a, b| {
            points[*a][axis].total_cmp(&points[*b][axis]).then(a.cmp(b))
        });
        let point = idx[mid];
        let slot = nodes.len();
        nodes.push(KdNode {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let left = Self::build(points, lo, nodes);
        let right = Self::build(points, &mut rest[1..], nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point; ties go to the lower index.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root?, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point, best: &mut (usize, f64)) {
        let n = &self.nodes[node];
        let p = &self.points[n.point];
        let d2 = dist_sq(p, q);
        if d2 < best.1 || (d2 == best.1 && n.point < best.0) {
            *best = (n.point, d2);
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, q, best);
        }
        if let Some(c) = far {
            if diff * diff <= best.1 {
                self.search(c, q, best);
            }
        }
    }
}

fn widest_axis(points: &[Point], idx: &[usize]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in idx {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    (0..3)
        .max_by(|a, b| {
            (hi[*a] - lo[*a])
                .total_cmp(&(hi[*b] - lo[*b]))
                .then(b.cmp(a))
        })
        .unwrap_or(0)
}

/// For every query point, the Euclidean distance to the closest target point.
/// Returns `None` when `targets` is empty.
pub fn nearest_distances(queries: &[Point], targets: &[Point]) -> Option<Vec<f64>> {
    if targets.is_empty() {
        return None;
    }
    let tree = KdTree::new(targets);
    Some(
        queries
            .par_iter()
            .map(|q| {
                tree.nearest(q)
                    .map(|(_, d2)| d2.sqrt())
                    .unwrap_or(f64::INFINITY)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(q: &Point, pts: &[Point]) -> f64 {
        pts.iter()
            .map(|p| dist_sq(p, q))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn grid_pairs_on_line() {
        let pts = [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 2.0],
            [0.0, 0.0, 5.0],
        ];
        let grid = HashGrid::new(&pts, 2.0);
        assert_eq!(grid.pairs_within(&pts, 2.0), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn kd_empty() {
        let pts: [Point; 0] = [];
        assert!(KdTree::new(&pts).nearest(&[0.0; 3]).is_none());
        assert!(nearest_distances(&[[1.0; 3]], &pts).is_none());
    }

    #[test]
    fn kd_duplicates_prefer_low_index() {
        let pts = [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&[0.0; 3]), Some((1, 0.0)));
    }

    proptest! {
        #[test]
        fn kd_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), 1..200),
            qs in prop::collection::vec(prop::array::uniform3(-25.0f64..25.0), 1..50),
        ) {
            let tree = KdTree::new(&pts);
            for q in &qs {
                let (_, d2) = tree.nearest(q).unwrap();
                prop_assert_eq!(d2, brute_nearest(q, &pts));
            }
        }

        #[test]
        fn grid_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(0i32..12), 0..150),
            r in 0.5f64..3.0,
        ) {
            let pts: Vec<Point> = pts.iter().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
            let grid = HashGrid::new(&pts, r);
            let mut brute = Vec::new();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    if dist_sq(&pts[i], &pts[j]) <= r * r {
                        brute.push((i, j));
                    }
                }
            }
            prop_assert_eq!(grid.pairs_within(&pts, r), brute);
        }
    }
}

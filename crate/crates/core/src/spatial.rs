//! Exact nearest-neighbor queries over a static point set.
//!
//! A balanced kd-tree stored implicitly in a permutation array. Results are
//! identical to a linear scan: distances are computed the same way and ties
//! are broken by the lowest point index.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    /// Permutation of point indices; each subtree owns a contiguous range.
    order: Vec<usize>,
    /// Split axis for the node whose median sits at `order[mid]`.
    axis: Vec<u8>,
}

/// A neighbor result: point index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        self.d2 < other.d2 || (self.d2 == other.d2 && self.index < other.index)
    }
}

impl SpatialIndex {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axis: vec![0; points.len()],
        };
        index.build(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let axis = self.widest_axis(lo, hi);
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        self.axis[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    fn widest_axis(&self, lo: usize, hi: usize) -> usize {
        let mut min = self.points[self.order[lo]];
        let mut max = min;
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let extent = max - min;
        extent.imax()
    }

    /// Closest indexed point; ties resolve to the lowest index.
    pub fn nearest(&self, query: &Vec3) -> Neighbor {
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_in(0, self.points.len(), query, &mut best);
        Neighbor {
            index: best.index,
            distance: best.d2.sqrt(),
        }
    }

    fn nearest_in(&self, lo: usize, hi: usize, query: &Vec3, best: &mut Candidate) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let c = Candidate {
                    d2: (self.points[i] - query).norm_squared(),
                    index: i,
                };
                if c.better_than(best) {
                    *best = c;
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let diff = query[axis] - self.points[pivot][axis];
        let c = Candidate {
            d2: (self.points[pivot] - query).norm_squared(),
            index: pivot,
        };
        if c.better_than(best) {
            *best = c;
        }
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(near.0, near.1, query, best);
        // Equal-distance points on the far side can still win the index tie-break.
        if diff * diff <= best.d2 {
            self.nearest_in(far.0, far.1, query, best);
        }
    }

    /// The `k` closest points sorted by (distance, index). Returns fewer when the
    /// index holds fewer than `k` points.
    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: Vec<Candidate> = Vec::with_capacity(k + 1);
        self.knn_in(0, self.points.len(), query, k, &mut heap);
        heap.into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.d2.sqrt(),
            })
            .collect()
    }

    fn offer(heap: &mut Vec<Candidate>, k: usize, c: Candidate) {
        if heap.len() == k && !c.better_than(&heap[k - 1]) {
            return;
        }
        let pos = heap.partition_point(|h| h.better_than(&c));
        heap.insert(pos, c);
        heap.truncate(k);
    }

    fn knn_in(&self, lo: usize, hi: usize, query: &Vec3, k: usize, heap: &mut Vec<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d2 = (self.points[i] - query).norm_squared();
                Self::offer(heap, k, Candidate { d2, index: i });
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let diff = query[axis] - self.points[pivot][axis];
        Self::offer(
            heap,
            k,
            Candidate {
                d2: (self.points[pivot] - query).norm_squared(),
                index: pivot,
            },
        );
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_in(near.0, near.1, query, k, heap);
        if heap.len() < k || diff * diff <= heap[k - 1].d2 {
            self.knn_in(far.0, far.1, query, k, heap);
        }
    }

    /// Closest point other than `self_index` (which must be an indexed point).
    pub fn nearest_other(&self, self_index: usize) -> Option<Neighbor> {
        let query = self.points[self_index];
        self.k_nearest(&query, 2)
            .into_iter()
            .find(|n| n.index != self_index)
    }
}

/// Free-function form of [`SpatialIndex::nearest`], returning `(index, distance)`.
pub fn nearest_neighbor(index: &SpatialIndex, query: &Vec3) -> (usize, f64) {
    let n = index.nearest(query);
    (n.index, n.distance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn linear_scan(points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    fn random_points(rng: &mut StdRng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn single_point() {
        let idx = SpatialIndex::new(&[Vec3::zeros()]).unwrap();
        assert_eq!(nearest_neighbor(&idx, &Vec3::new(3.0, 4.0, 0.0)), (0, 5.0));
    }

    #[test]
    fn exact_hit_is_zero() {
        let mut rng = StdRng::seed_from_u64(1);
        let pts = random_points(&mut rng, 50);
        let idx = SpatialIndex::new(&pts).unwrap();
        assert_eq!(nearest_neighbor(&idx, &pts[17]), (17, 0.0));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(SpatialIndex::new(&[]).is_err());
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = StdRng::seed_from_u64(2);
        for n in [1, 7, 9, 100, 500, 1000] {
            let pts = random_points(&mut rng, n);
            let idx = SpatialIndex::new(&pts).unwrap();
            for _ in 0..200 {
                let q = Vec3::new(
                    rng.random_range(-0.5..1.5),
                    rng.random_range(-0.5..1.5),
                    rng.random_range(-0.5..1.5),
                );
                assert_eq!(nearest_neighbor(&idx, &q), linear_scan(&pts, &q));
            }
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // Integer lattice with duplicates: many exact ties.
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..3 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let dup = pts.clone();
        pts.extend(dup);
        let idx = SpatialIndex::new(&pts).unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..300 {
            let q = Vec3::new(
                rng.random_range(0..12) as f64 * 0.5,
                rng.random_range(0..12) as f64 * 0.5,
                rng.random_range(0..6) as f64 * 0.5,
            );
            assert_eq!(nearest_neighbor(&idx, &q), linear_scan(&pts, &q));
        }
    }

    #[test]
    fn knn_matches_sorted_scan() {
        let mut rng = StdRng::seed_from_u64(9);
        let pts = random_points(&mut rng, 400);
        let idx = SpatialIndex::new(&pts).unwrap();
        for _ in 0..50 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random());
            let mut all: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| ((p - q).norm_squared(), i))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = idx.k_nearest(&q, 12);
            let want: Vec<usize> = all.iter().take(12).map(|x| x.1).collect();
            assert_eq!(got.iter().map(|n| n.index).collect::<Vec<_>>(), want);
        }
        assert_eq!(idx.k_nearest(&Vec3::zeros(), 1000).len(), 400);
    }

    #[test]
    fn nearest_other_skips_self() {
        let pts = vec![Vec3::zeros(), Vec3::new(0.01, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let idx = SpatialIndex::new(&pts).unwrap();
        let n = idx.nearest_other(0).unwrap();
        assert_eq!(n.index, 1);
        assert!((n.distance - 0.01).abs() < 1e-15);
        assert!(SpatialIndex::new(&[Vec3::zeros()]).unwrap().nearest_other(0).is_none());
    }
}

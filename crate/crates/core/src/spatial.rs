//! Exact k-nearest-neighbor queries over a static point set.

use std::cmp::Ordering;

/// Static KD-tree over `D`-dimensional points. Neighbor lists are ordered by
/// `(squared distance, insertion index)`, so ties resolve deterministically.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    /// Point indices laid out as an implicit balanced tree (median at the middle).
    order: Vec<usize>,
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    /// The `k` nearest points as `(squared distance, index)`, closest first.
    pub fn knn(&self, query: &[f64; D], k: usize) -> Vec<(f64, usize)> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.order, 0, query, k, &mut best);
        }
        best
    }

    /// Nearest point, `None` for an empty tree.
    pub fn nearest(&self, query: &[f64; D]) -> Option<(f64, usize)> {
        self.knn(query, 1).into_iter().next()
    }

    fn search(&self, slice: &[usize], depth: usize, q: &[f64; D], k: usize, best: &mut Vec<(f64, usize)>) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid];
        let p = &self.points[idx];
        offer(best, k, (dist2(p, q), idx));
        let axis = depth % D;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, k, best);
        if best.len() < k || diff * diff <= best[best.len() - 1].0 {
            self.search(far, depth + 1, q, k, best);
        }
    }
}

fn build<const D: usize>(points: &[[f64; D]], slice: &mut [usize], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % D;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| {
        points[*a][axis]
            .total_cmp(&points[*b][axis])
            .then(a.cmp(b))
    });
    let (left, right) = slice.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

fn cmp_entry(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn offer(best: &mut Vec<(f64, usize)>, k: usize, entry: (f64, usize)) {
    if best.len() == k && cmp_entry(&entry, &best[k - 1]) != Ordering::Less {
        return;
    }
    let pos = best
        .binary_search_by(|e| cmp_entry(e, &entry))
        .unwrap_or_else(|p| p);
    best.insert(pos, entry);
    best.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute<const D: usize>(pts: &[[f64; D]], q: &[f64; D], k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<_> = pts.iter().enumerate().map(|(i, p)| (dist2(p, q), i)).collect();
        all.sort_by(cmp_entry);
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_in_2d_and_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts2: Vec<[f64; 2]> = (0..300).map(|_| [rng.random(), rng.random()]).collect();
        let pts3: Vec<[f64; 3]> = (0..300)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let (t2, t3) = (KdTree::new(pts2.clone()), KdTree::new(pts3.clone()));
        for _ in 0..50 {
            let q2 = [rng.random(), rng.random()];
            let q3 = [rng.random(), rng.random(), rng.random()];
            assert_eq!(t2.knn(&q2, 6), brute(&pts2, &q2, 6));
            assert_eq!(t3.knn(&q3, 1), brute(&pts3, &q3, 1));
        }
    }

    #[test]
    fn ties_break_by_index() {
        // Integer grid: many equidistant neighbors.
        let pts: Vec<[f64; 2]> = (0..49).map(|i| [(i % 7) as f64, (i / 7) as f64]).collect();
        let tree = KdTree::new(pts.clone());
        let q = [3.0, 3.0];
        assert_eq!(tree.knn(&q, 9), brute(&pts, &q, 9));
        assert!(tree.knn(&q, 0).is_empty());
        assert_eq!(KdTree::<2>::new(vec![]).nearest(&q), None);
    }
}

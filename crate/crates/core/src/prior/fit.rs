use nalgebra::{Matrix4, Vector3, Vector4, SVD};

use crate::error::{MvsError, Result};
use crate::geometry::PlaneParams;
use crate::scalar::Real;
use crate::spatial::KdTree;

/// Triangle area from side lengths (Heron's formula).
pub fn heron_area<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    let len = |p: [T; 2], q: [T; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let (x, y, z) = (len(a, b), len(b, c), len(c, a));
    let s = (x + y + z) / T::lit(2.0);
    let q = s * (s - x) * (s - y) * (s - z);
    if q > T::zero() {
        q.sqrt()
    } else {
        T::zero()
    }
}

/// Unit plane through three points: the smallest right singular vector of the
/// homogeneous point matrix, signed so the plane faces the camera at the origin.
pub fn fit_plane<T: Real>(points: &[Vector3<T>; 3]) -> Result<PlaneParams<T>> {
    let mut a = Matrix4::zeros();
    for (r, p) in points.iter().enumerate() {
        a[(r, 0)] = p.x;
        a[(r, 1)] = p.y;
        a[(r, 2)] = p.z;
        a[(r, 3)] = T::one();
    }
    let svd = SVD::new(a, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| MvsError::DegenerateSupport("SVD did not converge".into()))?;
    let s = &svd.singular_values;
    if !(s[2] > s[0] * T::lit(1e-10)) {
        return Err(MvsError::DegenerateSupport("support points are collinear".into()));
    }
    let mut z: Vector4<T> = v_t.row(3).transpose();
    // Camera-facing: the camera center lies on the positive side.
    if z[3] < T::zero() || (z[3] == T::zero() && z[2] > T::zero()) {
        z = -z;
    }
    PlaneParams::from_coeffs(z)
}

/// First 3-combination, in distance order, of the `k` nearest credible points
/// whose pixel triangle has area above `min_area`. Returns point indices.
pub fn knn_support(
    pixel: [f64; 2],
    tree: &KdTree<2>,
    k: usize,
    min_area: f64,
) -> Option<[usize; 3]> {
    if tree.len() < 3 {
        return None;
    }
    let near: Vec<usize> = tree.knn(&pixel, k.max(3)).into_iter().map(|(_, i)| i).collect();
    first_good_triple(&near, |i| *tree.point(i), min_area)
}

/// Scans `(i, j, l)` with `i < j < l` in lexicographic order.
pub(crate) fn first_good_triple(
    order: &[usize],
    pos: impl Fn(usize) -> [f64; 2],
    min_area: f64,
) -> Option<[usize; 3]> {
    let n = order.len();
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                let (a, b, c) = (order[i], order[j], order[l]);
                if heron_area(pos(a), pos(b), pos(c)) > min_area {
                    return Some([a, b, c]);
                }
            }
        }
    }
    None
}

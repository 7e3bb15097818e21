//! Forward-backward reprojection error against a source depth map.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::state::DepthNormalMap;
use crate::geometry::{CameraModel, Hypothesis};

/// Relative pose between a reference camera and a source with a depth map.
#[derive(Debug, Clone)]
pub(crate) struct GeoLink<'a> {
    reference: &'a CameraModel<f64>,
    source: &'a CameraModel<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    depth: &'a DepthNormalMap,
}

impl<'a> GeoLink<'a> {
    pub(crate) fn new(
        reference: &'a CameraModel<f64>,
        source: &'a CameraModel<f64>,
        depth: &'a DepthNormalMap,
    ) -> Self {
        let (r, t) = reference.relative_pose(source);
        Self {
            reference,
            source,
            r,
            t,
            depth,
        }
    }

    pub(crate) fn cost(&self, pixel: &Vector2<f64>, depth: f64, clamp: f64) -> f64 {
        let x_ref = self.reference.ray(pixel) * depth;
        let x_src = self.r * x_ref + self.t;
        let Some(p_src) = self.source.project(&x_src) else {
            return clamp;
        };
        let Some(d_src) = bilinear_depth(self.depth, &p_src) else {
            return clamp;
        };
        let back = self.source.ray(&p_src) * d_src;
        let x_back = self.r.transpose() * (back - self.t);
        match self.reference.project(&x_back) {
            Some(p) => (p - pixel).norm().min(clamp),
            None => clamp,
        }
    }
}

/// Bilinear depth lookup; requires all four neighbors valid.
fn bilinear_depth(map: &DepthNormalMap, p: &Vector2<f64>) -> Option<f64> {
    let (w, h) = (map.width(), map.height());
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (p.x as usize, p.y as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (p.x - x0 as f64, p.y - y0 as f64);
    let mut acc = 0.0;
    for (x, y, wt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        if !map.is_valid(x, y) {
            return None;
        }
        acc += wt * map.hypothesis(x, y).depth;
    }
    Some(acc)
}

/// Reprojection error of `pixel` at the depth of `h` through the source
/// depth map, clamped to `clamp` pixels. Invalid lookups cost `clamp`.
pub fn geometric_consistency_cost(
    reference: &CameraModel<f64>,
    source: &CameraModel<f64>,
    pixel: (f64, f64),
    h: &Hypothesis<f64>,
    source_depth: &DepthNormalMap,
    clamp: f64,
) -> f64 {
    GeoLink::new(reference, source, source_depth).cost(&Vector2::new(pixel.0, pixel.1), h.depth, clamp)
}

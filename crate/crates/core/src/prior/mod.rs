//! Planar prior model built from credible hypotheses.
//!
//! Credible pixels are triangulated in image space; pixels inside a triangle
//! take the plane through its three lifted vertices, the rest fall back to a
//! plane through nearby non-collinear credible points.

mod delaunay;
mod fit;

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

pub use delaunay::triangulate;
pub use fit::{fit_plane, heron_area, knn_support};

use crate::error::{MvsError, Result};
use crate::geometry::{CameraModel, Hypothesis, PlaneParams};
use crate::imaging::{
    joint_bilateral_upsample, save_gray_png, write_pfm, Image, JbuParams, PfmData, ScalarField,
    VectorField,
};
use crate::patchmatch::DepthNormalMap;
use crate::scalar::Real;
use crate::spatial::KdTree;

/// Above this many credible points only those on even pixel coordinates are kept.
const SUBSAMPLE_ABOVE: usize = 500_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Credibility threshold on the stored cost.
    pub tau_cred: f64,
    /// Nearest credible points searched outside the triangulation.
    pub knn: usize,
    /// Minimum pixel-space area of a KNN support triangle.
    pub min_area: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Relative depth tolerance of the prior term.
    pub sigma_depth: f64,
    /// Angular tolerance of the prior term, radians.
    pub sigma_normal: f64,
    /// Largest angle, in degrees, between a triangle's fitted plane and the
    /// normal of any of its vertices before the triangle counts as degenerate.
    pub max_support_angle: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            tau_cred: 0.1,
            knn: 6,
            min_area: 0.5,
            eta: 0.2,
            gamma: 0.1,
            sigma_depth: 0.02,
            sigma_normal: 0.25,
            max_support_angle: 60.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn < 3 {
            return Err(MvsError::invalid("knn must be at least 3"));
        }
        if !(self.max_support_angle > 0.0) {
            return Err(MvsError::invalid("max_support_angle must be positive"));
        }
        if !(self.tau_cred > 0.0 && self.min_area >= 0.0 && self.eta >= 0.0 && self.gamma > 0.0) {
            return Err(MvsError::invalid("prior constants out of range"));
        }
        if !(self.sigma_depth > 0.0 && self.sigma_normal > 0.0) {
            return Err(MvsError::invalid("prior sigmas must be positive"));
        }
        Ok(())
    }
}

/// Where a pixel's prior plane came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Triangulated,
    Knn,
    None,
}

/// Dense per-pixel prior hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPriorModel {
    width: usize,
    height: usize,
    hyps: Vec<Hypothesis<f64>>,
    valid: Vec<bool>,
    provenance: Vec<Provenance>,
}

impl PlanarPriorModel {
    /// Model without any valid pixel.
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            hyps: vec![Hypothesis::fronto_parallel(1.0); n],
            valid: vec![false; n],
            provenance: vec![Provenance::None; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&Hypothesis<f64>> {
        let i = y * self.width + x;
        self.valid[i].then(|| &self.hyps[i])
    }

    pub fn provenance(&self, x: usize, y: usize) -> Provenance {
        self.provenance[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|q| **q == p).count()
    }

    pub fn depth_field(&self) -> ScalarField<f64> {
        let d = self.hyps.iter().map(|h| h.depth).collect();
        ScalarField::new(self.width, self.height, d, self.valid.clone()).expect("consistent buffers")
    }

    pub fn normal_field(&self) -> VectorField<f64> {
        let n = self.hyps.iter().map(|h| h.normal).collect();
        VectorField::new(self.width, self.height, n, self.valid.clone()).expect("consistent buffers")
    }

    /// Transfers the model to the guide's resolution. Depth and normal are
    /// upsampled independently; pixels leaving `camera`'s depth range are dropped.
    pub fn upsampled(
        &self,
        camera: &CameraModel<f64>,
        guide: &Image<f32>,
        scale: usize,
        params: JbuParams,
    ) -> Result<Self> {
        let depth = joint_bilateral_upsample(&self.depth_field(), guide, params)?;
        let normal = joint_bilateral_upsample(&self.normal_field(), guide, params)?;
        let (w, h) = (guide.width(), guide.height());
        let mut out = Self::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                let (Some(d), Some(n)) = (depth.get(x, y), normal.get(x, y)) else {
                    continue;
                };
                if !camera.contains_depth(d) {
                    continue;
                }
                let i = y * w + x;
                let ray = camera.ray(&Vector2::new(x as f64, y as f64));
                out.hyps[i] = Hypothesis::new(d, n, &ray);
                out.valid[i] = true;
                let (cx, cy) = ((x / scale).min(self.width - 1), (y / scale).min(self.height - 1));
                out.provenance[i] = match self.provenance(cx, cy) {
                    Provenance::None => Provenance::Knn,
                    p => p,
                };
            }
        }
        Ok(out)
    }

    /// Fills pixels without a valid prior from `coarser`, keeping its provenance.
    pub fn fill_from(&mut self, coarser: &Self) -> Result<()> {
        if coarser.width != self.width || coarser.height != self.height {
            return Err(MvsError::invalid("prior models differ in size"));
        }
        for i in 0..self.valid.len() {
            if !self.valid[i] && coarser.valid[i] {
                self.hyps[i] = coarser.hyps[i];
                self.valid[i] = true;
                self.provenance[i] = coarser.provenance[i];
            }
        }
        Ok(())
    }

    /// Writes `<prefix>_depth.pfm`, `<prefix>_normal.pfm` and a provenance PNG
    /// (black none, gray knn, white triangulated).
    pub fn dump(&self, dir: &Path, prefix: &str) -> Result<()> {
        write_pfm(&dir.join(format!("{prefix}_depth.pfm")), &PfmData::from_scalar(&self.depth_field()))?;
        write_pfm(&dir.join(format!("{prefix}_normal.pfm")), &PfmData::from_vector(&self.normal_field()))?;
        let img = Image::from_fn(self.width, self.height, |x, y| match self.provenance(x, y) {
            Provenance::None => 0.0f32,
            Provenance::Knn => 0.5,
            Provenance::Triangulated => 1.0,
        });
        save_gray_png(&dir.join(format!("{prefix}_provenance.png")), &img)
    }
}

/// Pixels whose stored cost is below the credibility threshold, row-major.
pub fn credible_points(map: &DepthNormalMap, cfg: &PriorConfig) -> Vec<((usize, usize), Hypothesis<f64>)> {
    let mut out = Vec::new();
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.cost(x, y) < cfg.tau_cred {
                out.push(((x, y), map.hypothesis(x, y)));
            }
        }
    }
    out
}

/// Builds the prior model for one view from its hypotheses and costs.
pub fn build_prior_model(
    map: &DepthNormalMap,
    camera: &CameraModel<f64>,
    cfg: &PriorConfig,
) -> Result<PlanarPriorModel> {
    let (w, h) = (map.width(), map.height());
    if camera.width() != w || camera.height() != h {
        return Err(MvsError::invalid("camera and map sizes differ"));
    }
    let mut credible = credible_points(map, cfg);
    if credible.len() > SUBSAMPLE_ABOVE {
        credible.retain(|((x, y), _)| x % 2 == 0 && y % 2 == 0);
    }
    let mut model = PlanarPriorModel::empty(w, h);
    if credible.len() < 3 {
        return Ok(model);
    }
    let pixels: Vec<[f64; 2]> = credible.iter().map(|((x, y), _)| [*x as f64, *y as f64]).collect();
    let lifted: Vec<Vector3<f64>> = credible
        .iter()
        .zip(&pixels)
        .map(|(c, p)| camera.ray(&Vector2::new(p[0], p[1])) * c.1.depth)
        .collect();
    let lift = |ids: [usize; 3]| fit_plane(&ids.map(|i| lifted[i])).ok();

    let (owner, planes): (Vec<Option<u32>>, Vec<Option<PlaneParams<f64>>>) = match triangulate(&pixels) {
        Ok(tris) => {
            let owner = delaunay::rasterize(&pixels, &tris, w, h);
            let max_angle = cfg.max_support_angle.to_radians();
            let planes = tris
                .iter()
                .map(|t| {
                    lift(*t).filter(|p| {
                        let n = p.normal_part();
                        t.iter().all(|&i| {
                            let a = n.angle(&credible[i].1.normal);
                            a.min(std::f64::consts::PI - a) <= max_angle
                        })
                    })
                })
                .collect();
            (owner, planes)
        }
        Err(_) => (vec![None; w * h], Vec::new()),
    };
    let tree = KdTree::new(pixels);

    let rows: Vec<Vec<(Hypothesis<f64>, bool, Provenance)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let (plane, prov) = match owner[y * w + x] {
                        Some(t) => (planes[t as usize], Provenance::Triangulated),
                        None => (
                            knn_support([x as f64, y as f64], &tree, cfg.knn, cfg.min_area).and_then(lift),
                            Provenance::Knn,
                        ),
                    };
                    let px = Vector2::new(x as f64, y as f64);
                    let hyp = plane.and_then(|p| {
                        let d = p.depth_along_ray(camera, &px)?;
                        camera
                            .contains_depth(d)
                            .then(|| Hypothesis::new(d, p.normal_part(), &camera.ray(&px)))
                    });
                    match hyp {
                        Some(hp) => (hp, true, prov),
                        None => (Hypothesis::fronto_parallel(1.0), false, Provenance::None),
                    }
                })
                .collect()
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (hp, valid, prov)) in row.into_iter().enumerate() {
            let i = y * w + x;
            model.hyps[i] = hp;
            model.valid[i] = valid;
            model.provenance[i] = prov;
        }
    }
    Ok(model)
}

/// Photometric cost adjusted by agreement with a prior hypothesis. A perfect
/// match leaves the cost unchanged; any deviation adds a bounded penalty.
pub fn prior_assisted_cost<T: Real>(
    c_photo: T,
    h: &Hypothesis<T>,
    prior: Option<&Hypothesis<T>>,
    cfg: &PriorConfig,
) -> T {
    let Some(p) = prior else {
        return c_photo;
    };
    let dd = (h.depth - p.depth) / p.depth;
    let dtheta = h.normal.cross(&p.normal).norm().atan2(h.normal.dot(&p.normal));
    let sd = T::lit(cfg.sigma_depth);
    let sn = T::lit(cfg.sigma_normal);
    let two = T::lit(2.0);
    let (eta, gamma) = (T::lit(cfg.eta), T::lit(cfg.gamma));
    let g = (-(dd * dd) / (two * sd * sd) - dtheta * dtheta / (two * sn * sn)).exp();
    c_photo - eta * (gamma + g).ln() + eta * (gamma + T::one()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn camera(w: usize, h: usize) -> CameraModel<f64> {
        CameraModel::simple(
            60.0,
            ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
            Matrix3::identity(),
            Vector3::zeros(),
            [1.0, 10.0],
            w,
            h,
        )
        .unwrap()
    }

    /// Tilted plane z = 3 + 0.02 x (camera frame) with unit costs `cost(x, y)`.
    fn plane_map(cam: &CameraModel<f64>, cost: impl Fn(usize, usize) -> f64) -> DepthNormalMap {
        let n = Vector3::new(0.02, 0.0, -1.0).normalize();
        let plane = PlaneParams::from_point_normal(&Vector3::new(0.0, 0.0, 3.0), &n);
        let mut m = DepthNormalMap::invalid(cam.width(), cam.height());
        for y in 0..cam.height() {
            for x in 0..cam.width() {
                let px = Vector2::new(x as f64, y as f64);
                let d = plane.depth_along_ray(cam, &px).unwrap();
                let hp = Hypothesis::new(d, n, &cam.ray(&px));
                let c = cost(x, y);
                m.set(x, y, &hp, c, c, true);
            }
        }
        m
    }

    #[test]
    fn credible_filter_matches_predicate() {
        let cam = camera(16, 12);
        assert_eq!(credible_points(&plane_map(&cam, |_, _| 0.05), &PriorConfig::default()).len(), 192);
        assert!(credible_points(&plane_map(&cam, |_, _| 2.0), &PriorConfig::default()).is_empty());
        let cost = |x: usize, y: usize| ((x * 7 + y * 13) % 10) as f64 / 40.0;
        let got: Vec<_> = credible_points(&plane_map(&cam, cost), &PriorConfig::default())
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        let want: Vec<_> = (0..12)
            .flat_map(|y| (0..16).map(move |x| (x, y)))
            .filter(|(x, y)| cost(*x, *y) < 0.1)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn dense_plane_prior_is_exact_inside_hull() {
        let cam = camera(40, 30);
        let map = plane_map(&cam, |x, y| if (x + y) % 3 == 0 { 0.02 } else { 1.0 });
        let model = build_prior_model(&map, &cam, &PriorConfig::default()).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                if model.provenance(x, y) == Provenance::Triangulated {
                    let p = model.get(x, y).unwrap();
                    let gt = map.hypothesis(x, y).depth;
                    assert!(((p.depth - gt) / gt).abs() < 5e-3);
                }
            }
        }
        assert!(model.count(Provenance::Triangulated) > 1000);
    }

    #[test]
    fn triangles_disagreeing_with_vertex_normals_are_dropped() {
        let cam = camera(40, 30);
        let mut map = plane_map(&cam, |_, _| 0.0);
        let ray = cam.ray(&Vector2::new(20.0, 15.0));
        let tilted = Hypothesis::new(map.hypothesis(20, 15).depth, Vector3::new(1.0, 0.0, -0.2), &ray);
        map.set(20, 15, &tilted, 0.0, 0.0, true);
        let model = build_prior_model(&map, &cam, &PriorConfig::default()).unwrap();
        assert!(model.get(20, 15).is_none());
        assert_eq!(model.provenance(20, 15), Provenance::None);
        assert!(model.get(5, 5).is_some());
        let lax = PriorConfig {
            max_support_angle: 90.0,
            ..PriorConfig::default()
        };
        assert!(build_prior_model(&map, &cam, &lax).unwrap().get(20, 15).is_some());
    }

    #[test]
    fn central_cluster_extends_to_corners_with_knn() {
        let cam = camera(40, 30);
        let map = plane_map(&cam, |x, y| if (15..25).contains(&x) && (10..20).contains(&y) { 0.0 } else { 1.5 });
        let model = build_prior_model(&map, &cam, &PriorConfig::default()).unwrap();
        for (x, y) in [(0, 0), (39, 0), (0, 29), (39, 29)] {
            assert_eq!(model.provenance(x, y), Provenance::Knn);
            assert!(model.get(x, y).is_some());
        }
        assert_eq!(model.provenance(20, 15), Provenance::Triangulated);
    }

    #[test]
    fn out_of_range_prior_is_masked() {
        let cam = camera(40, 30);
        // Steep plane that leaves [1, 10] toward the right of the image.
        let n = Vector3::new(3.0, 0.0, -1.0).normalize();
        let plane = PlaneParams::from_point_normal(&Vector3::new(0.0, 0.0, 3.0), &n);
        let mut m = DepthNormalMap::invalid(40, 30);
        for y in 0..30 {
            for x in 0..10 {
                let px = Vector2::new(x as f64, y as f64);
                let d = plane.depth_along_ray(&cam, &px).unwrap();
                m.set(x, y, &Hypothesis::new(d, n, &cam.ray(&px)), 0.0, 0.0, true);
            }
        }
        let model = build_prior_model(&m, &cam, &PriorConfig::default()).unwrap();
        let mut masked = 0;
        for y in 0..30 {
            for x in 0..40 {
                let px = Vector2::new(x as f64, y as f64);
                let d = plane.depth_along_ray(&cam, &px);
                let inside = d.is_some_and(|d| (1.0..=10.0).contains(&d));
                if !inside {
                    assert!(model.get(x, y).is_none());
                    assert_eq!(model.provenance(x, y), Provenance::None);
                    masked += 1;
                }
            }
        }
        assert!(masked > 0);
    }

    #[test]
    fn too_few_points_give_empty_model() {
        let cam = camera(10, 10);
        let model = build_prior_model(&plane_map(&cam, |x, y| if x + y == 0 { 0.0 } else { 2.0 }), &cam, &PriorConfig::default()).unwrap();
        assert_eq!(model.valid_count(), 0);
    }

    #[test]
    fn assisted_cost_contract() {
        let cfg = PriorConfig::default();
        let p = Hypothesis::fronto_parallel(2.0);
        assert_eq!(prior_assisted_cost(0.37, &p, Some(&p), &cfg), 0.37);
        assert_eq!(prior_assisted_cost(0.37, &Hypothesis::fronto_parallel(3.0), None, &cfg), 0.37);
        let off = Hypothesis::fronto_parallel(2.04);
        // 2% off: exp(-0.5) under the log.
        let want = 0.37 - 0.2 * (0.1 + (-0.5f64).exp()).ln() + 0.2 * 1.1f64.ln();
        assert!((prior_assisted_cost(0.37, &off, Some(&p), &cfg) - want).abs() < 1e-12);
    }
}
